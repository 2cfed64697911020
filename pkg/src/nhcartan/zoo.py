"""Benchmark systems with frames, constraints, Lagrangians and reference solutions.

None of these systems is taken from a published example.  Each is a small
construction chosen to exercise one part of the engine:

``harmonic_oscillator``
    n = m = 1, Cartesian frame; closed-form solution.
``free_rigid_body``
    n = m = 3, body angular-velocity frame on ZXZ Euler angles (quasi-velocities,
    constant structure coefficients); checked against Euler's equations.
``knife_edge``
    n = 3, m = 2, linear constraint ``eta_3 = a eta_1`` in a Cartesian frame;
    checked against a Baumgarte-stabilised multiplier formulation.
``quadratic_constraint_particle``
    n = 3, m = 2, ``eta_3 = (eta_1^2 + eta_2^2) / (2a)``; genuinely nonlinear in
    the velocities, no multiplier oracle.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constraints import ConstraintSet, complete_eta, constraint_residual
from .dynamics import LagrangianModel, LagrangeRHS, quadratic_lagrangian, reduced_hessian
from .errors import InvalidParameter, OracleUnavailable, UnknownModel
from .frame import GroupFrame, zeta
from .integrate import IntegratorConfig, Trajectory, integrate, sample_times

# Euler-angle states with |sin(theta)| below this are rejected for the SO(3) frame
SO3_SINGULAR_BAND = 0.05


# ---- frames -----------------------------------------------------------------

def cartesian_frame(n):
    """``X_0 = d/dt``, ``X_p = d/dx_p``; all structure coefficients vanish."""
    eye = np.eye(n + 1)

    def xi(x, t):
        return np.broadcast_to(eye, np.shape(x)[:-1] + (n + 1, n + 1))

    def xi_jacobian(x, t):
        return np.zeros(np.shape(x)[:-1] + (n + 1, n + 1, n + 1))

    def structure(x, t):
        b = np.shape(x)[:-1]
        return np.zeros(b + (n, n)), np.zeros(b + (n, n, n))

    return GroupFrame(n, xi, xi_jacobian, structure, name=f"cartesian{n}")


def so3_body_frame():
    """Body angular-velocity frame on ZXZ Euler angles ``x = (phi, theta, psi)``.

    ``eta`` are the body components of the angular velocity and
    ``[X_p, X_q] = eps_pqr X_r``.  Singular where ``sin(theta) = 0``.
    """

    def xi(x, t):
        th, ps = x[..., 1], x[..., 2]
        s, c = np.sin(th), np.cos(th)
        sp, cp = np.sin(ps), np.cos(ps)
        out = np.zeros(np.shape(x)[:-1] + (4, 4))
        out[..., 0, 0] = 1.0
        out[..., 1, 1:] = np.stack([sp / s, cp, -c * sp / s], axis=-1)
        out[..., 2, 1:] = np.stack([cp / s, -sp, -c * cp / s], axis=-1)
        out[..., 3, 3] = 1.0
        return out

    def xi_jacobian(x, t):
        th, ps = x[..., 1], x[..., 2]
        s, c = np.sin(th), np.cos(th)
        sp, cp = np.sin(ps), np.cos(ps)
        J = np.zeros(np.shape(x)[:-1] + (4, 4, 4))
        # derivative slot 2 is theta, slot 3 is psi
        J[..., 1, 1:, 2] = np.stack([-sp * c / s**2, 0 * s, sp / s**2], axis=-1)
        J[..., 1, 1:, 3] = np.stack([cp / s, -sp, -c * cp / s], axis=-1)
        J[..., 2, 1:, 2] = np.stack([-cp * c / s**2, 0 * s, cp / s**2], axis=-1)
        J[..., 2, 1:, 3] = np.stack([-sp / s, -cp, c * sp / s], axis=-1)
        return J

    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0

    def structure(x, t):
        b = np.shape(x)[:-1]
        return np.zeros(b + (3, 3)), np.broadcast_to(eps, b + (3, 3, 3))

    return GroupFrame(3, xi, xi_jacobian, structure, name="so3_body")


def rotation_from_euler(x):
    """Body-to-space rotation ``Rz(phi) Rx(theta) Rz(psi)``."""
    x = np.asarray(x, dtype=float)

    def rz(a):
        c, s = np.cos(a), np.sin(a)
        R = np.zeros(np.shape(a) + (3, 3))
        R[..., 0, 0], R[..., 0, 1], R[..., 1, 0], R[..., 1, 1] = c, -s, s, c
        R[..., 2, 2] = 1.0
        return R

    def rx(a):
        c, s = np.cos(a), np.sin(a)
        R = np.zeros(np.shape(a) + (3, 3))
        R[..., 0, 0] = 1.0
        R[..., 1, 1], R[..., 1, 2], R[..., 2, 1], R[..., 2, 2] = c, -s, s, c
        return R

    return rz(x[..., 0]) @ rx(x[..., 1]) @ rz(x[..., 2])


def euler_from_rotation(R):
    """Inverse of :func:`rotation_from_euler` with ``theta`` in ``(0, pi)``."""
    R = np.asarray(R, dtype=float)
    th = np.arccos(np.clip(R[..., 2, 2], -1.0, 1.0))
    ps = np.arctan2(R[..., 2, 0], R[..., 2, 1])
    ph = np.arctan2(R[..., 0, 2], -R[..., 1, 2])
    return np.stack([ph, th, ps], axis=-1)


# ---- descriptors ------------------------------------------------------------

@dataclass(frozen=True)
class ModelDescriptor:
    name: str
    n: int
    m: int
    frame: GroupFrame
    constraints: Optional[ConstraintSet]
    lagrangian: LagrangianModel
    parameters: dict
    reference: str
    default_x: np.ndarray
    default_eta: np.ndarray
    constraint_type: str = "none"
    description: str = ""
    check: dict = field(default_factory=dict, compare=False)

    @property
    def oracles(self):
        return [] if self.reference == "none" else [self.reference]


def self_check(desc, tol=1e-12):
    """Frame invertibility near the default state, constraint admissibility and
    Hessian regularity.  Returns a dict of named booleans."""
    model = desc.lagrangian
    rng = np.random.default_rng(0)
    xs = desc.default_x + 0.05 * rng.standard_normal((16, desc.n))
    out = {}
    try:
        zeta(desc.frame, xs, 0.0)
        out["frame_invertible"] = True
    except Exception:
        out["frame_invertible"] = False
    eta = complete_eta(model.cs, desc.default_eta, desc.default_x, 0.0)
    out["constraint_admissible"] = bool(np.all(constraint_residual(model.cs, eta, desc.default_x, 0.0) <= tol))
    M = reduced_hessian(model, desc.default_eta, desc.default_x, 0.0)
    out["hessian_regular"] = bool(1.0 / np.linalg.cond(M) > 1e-10)
    return out


def _positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidParameter(f"parameter {name!r} must be positive, got {value!r}")
    return arr


def _harmonic_oscillator(p):
    mass, k = float(_positive("mass", p["mass"])), float(_positive("k", p["k"]))
    frame = cartesian_frame(1)
    model = quadratic_lagrangian(frame, [[mass]], lambda x: 0.5 * k * x[..., 0] ** 2,
                                 lambda x: k * x, name="harmonic_oscillator")
    return dict(frame=frame, constraints=None, lagrangian=model, reference="closed_form",
                default_x=np.array([1.0]), default_eta=np.array([0.0]),
                description="L = m eta^2/2 - k x^2/2 in a Cartesian frame")


def _free_rigid_body(p):
    inertia = _positive("I", p["I"])
    if inertia.shape != (3,):
        raise InvalidParameter("parameter 'I' needs three principal moments")
    frame = so3_body_frame()
    model = quadratic_lagrangian(frame, np.diag(inertia), lambda x: np.zeros(np.shape(x)[:-1]),
                                 lambda x: np.zeros(np.shape(x)), name="free_rigid_body")
    eta0 = np.array([1.0, 0.4, 0.3])
    # orient the body so that the angular momentum points along space z
    Lhat = inertia * eta0 / np.linalg.norm(inertia * eta0)
    x0 = np.array([0.3, np.arccos(Lhat[2]), np.arctan2(Lhat[0], Lhat[1])])
    return dict(frame=frame, constraints=None, lagrangian=model, reference="euler_equations",
                default_x=x0, default_eta=eta0,
                description="L = sum I_p eta_p^2 / 2 in the SO(3) body frame (ZXZ angles)")


def _knife_edge(p):
    mass = float(_positive("mass", p["mass"]))
    a, k, c = float(p["a"]), float(p["k"]), float(p["c"])
    if not np.isfinite(a):
        raise InvalidParameter("parameter 'a' must be finite")
    frame = cartesian_frame(3)

    def phi(e, x, t):
        return a * e[..., :1]

    def dphi(e, x, t):
        out = np.zeros(np.shape(e)[:-1] + (1, 2))
        out[..., 0, 0] = a
        return out

    def zeros(*tail):
        return lambda e, x, t: np.zeros(np.shape(e)[:-1] + tail)

    cs = ConstraintSet(2, 3, phi, dphi, dphi_dx=zeros(1, 3), dphi_dt=zeros(1),
                       d2phi_deta2=zeros(1, 2, 2), d2phi_deta_dx=zeros(1, 2, 3),
                       d2phi_deta_dt=zeros(1, 2), label="knife_edge")

    def V(x):
        x1, x2 = x[..., 0], x[..., 1]
        return 0.5 * k * (x1**2 + x2**2) + 0.5 * c * x1**2 * x2**2

    def gradV(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([k * x1 + c * x1 * x2**2, k * x2 + c * x1**2 * x2, 0 * x1], axis=-1)

    model = quadratic_lagrangian(frame, mass * np.eye(3), V, gradV, constraints=cs, name="knife_edge")
    return dict(frame=frame, constraints=cs, lagrangian=model, reference="dae_multiplier",
                default_x=np.array([1.0, -0.5, 0.2]), default_eta=np.array([0.3, 0.8]),
                constraint_type="linear",
                description="eta_3 = a eta_1, L = m|eta|^2/2 - k(x1^2+x2^2)/2 - c x1^2 x2^2/2")


def _quadratic_particle(p):
    a = float(p["a"])
    if not np.isfinite(a) or a == 0.0:
        raise InvalidParameter("parameter 'a' must be finite and nonzero")
    k = float(p["k"])
    frame = cartesian_frame(3)

    def phi(e, x, t):
        return (0.5 / a) * np.sum(e**2, axis=-1, keepdims=True)

    def dphi(e, x, t):
        return (e / a)[..., None, :]

    def hess(e, x, t):
        return np.broadcast_to(np.eye(2) / a, np.shape(e)[:-1] + (1, 2, 2))

    def zeros(*tail):
        return lambda e, x, t: np.zeros(np.shape(e)[:-1] + tail)

    cs = ConstraintSet(2, 3, phi, dphi, dphi_dx=zeros(1, 3), dphi_dt=zeros(1),
                       d2phi_deta2=hess, d2phi_deta_dx=zeros(1, 2, 3),
                       d2phi_deta_dt=zeros(1, 2), label="quadratic")

    model = quadratic_lagrangian(frame, np.eye(3),
                                 lambda x: 0.5 * k * (x[..., 0] ** 2 + x[..., 1] ** 2),
                                 lambda x: k * x * np.array([1.0, 1.0, 0.0]),
                                 constraints=cs, name="quadratic_constraint_particle")
    return dict(frame=frame, constraints=cs, lagrangian=model, reference="none",
                default_x=np.array([1.0, 0.2, 0.0]), default_eta=np.array([0.1, 0.8]),
                constraint_type="nonlinear",
                description="eta_3 = (eta_1^2+eta_2^2)/(2a), L = |eta|^2/2 - k(x1^2+x2^2)/2")


_REGISTRY = {
    "harmonic_oscillator": (_harmonic_oscillator, {"mass": 1.0, "k": 1.0}, (1, 1)),
    "free_rigid_body": (_free_rigid_body, {"I": (1.0, 2.0, 3.0)}, (3, 3)),
    "knife_edge": (_knife_edge, {"mass": 1.0, "a": 0.5, "k": 1.0, "c": 0.2}, (3, 2)),
    "quadratic_constraint_particle": (_quadratic_particle, {"a": 1.0, "k": 1.0}, (3, 2)),
}


def model_names():
    return list(_REGISTRY)


def model_defaults(name):
    if name not in _REGISTRY:
        raise UnknownModel(f"unknown model {name!r}; available: {', '.join(_REGISTRY)}")
    return dict(_REGISTRY[name][1])


def get_model(name, params=None, **overrides):
    """Build and self-check the named model; ``params``/``overrides`` replace defaults."""
    defaults = model_defaults(name)
    build, _, (n, m) = _REGISTRY[name]
    given = dict(params or {}, **overrides)
    unknown = set(given) - set(defaults)
    if unknown:
        raise InvalidParameter(f"{name}: unknown parameter(s) {sorted(unknown)}")
    values = dict(defaults, **given)
    parts = build(values)
    desc = ModelDescriptor(name=name, n=n, m=m, parameters=values, **parts)
    result = self_check(desc)
    if not all(result.values()):
        raise InvalidParameter(f"{name}: self-check failed {result}")
    object.__setattr__(desc, "check", result)
    return desc


# ---- reference solutions ----------------------------------------------------

def _euler_rhs(inertia):
    def rhs(t, z):
        R = z[..., :9].reshape(z.shape[:-1] + (3, 3))
        w = z[..., 9:]
        wdot = np.cross(inertia * w, w) / inertia
        W = np.zeros(w.shape[:-1] + (3, 3))
        W[..., 0, 1], W[..., 0, 2], W[..., 1, 2] = -w[..., 2], w[..., 1], -w[..., 0]
        W = W - np.swapaxes(W, -1, -2)
        Rdot = R @ W
        return np.concatenate([Rdot.reshape(z.shape[:-1] + (9,)), wdot], axis=-1)
    return rhs


def _knife_dae_rhs(desc, alpha):
    p = desc.parameters
    mass, a = p["mass"], p["a"]
    model = desc.lagrangian
    G = np.array([-a, 0.0, 1.0])
    K = np.zeros((4, 4))
    K[:3, :3] = mass * np.eye(3)
    K[:3, 3] = -G
    K[3, :3] = G

    def rhs(t, z):
        x, v = z[:3], z[3:]
        force = model.grad_x(v, x, t)  # dL/dx = -grad V
        b = np.concatenate([force, [-alpha * (G @ v)]])
        sol = np.linalg.solve(K, b)
        return np.concatenate([v, sol[:3]])

    return rhs


BAUMGARTE_ALPHA = 10.0


def oracle_trajectory(desc, x0, eta0, t1, cfg=None, t0=0.0):
    """Reference trajectory in the engine's Lagrange-side layout ``(x, eta_i)``.

    * ``closed_form``: the oscillator solution evaluated at the sample times.
    * ``euler_equations``: ``I wdot = (I w) x w`` and ``Rdot = R hat(w)``
      integrated directly; Euler angles are read back from ``R`` and unwrapped.
    * ``dae_multiplier``: ``[[M, -G^T], [G, 0]] [vdot, lam] = [-grad V, -alpha g]``
      with the velocity-level constraint ``g = G v`` and Baumgarte gain
      ``alpha = 10``.
    """
    cfg = cfg or IntegratorConfig(rtol=1e-12, atol=1e-14)
    x0 = np.asarray(x0, dtype=float)
    eta0 = np.asarray(eta0, dtype=float)
    if desc.reference == "closed_form":
        ts = sample_times(float(t0), float(t1), cfg.sample_interval)
        w = np.sqrt(desc.parameters["k"] / desc.parameters["mass"])
        tau = ts - t0
        x = x0[0] * np.cos(w * tau) + eta0[0] / w * np.sin(w * tau)
        v = -x0[0] * w * np.sin(w * tau) + eta0[0] * np.cos(w * tau)
        return Trajectory(ts, np.stack([x, v], axis=-1), {"steps": 0, "rejected": 0, "nfev": 0})
    if desc.reference == "euler_equations":
        inertia = np.asarray(desc.parameters["I"], dtype=float)
        z0 = np.concatenate([rotation_from_euler(x0).ravel(), eta0])
        tr = integrate(_euler_rhs(inertia), z0, t0, t1, cfg)
        R = tr.y[:, :9].reshape(-1, 3, 3)
        ang = np.unwrap(euler_from_rotation(R), axis=0)
        ang += 2 * np.pi * np.round((x0 - ang[0]) / (2 * np.pi))
        return Trajectory(tr.t, np.concatenate([ang, tr.y[:, 9:]], axis=-1), tr.stats)
    if desc.reference == "dae_multiplier":
        v0 = complete_eta(desc.lagrangian.cs, eta0, x0, t0)
        tr = integrate(_knife_dae_rhs(desc, BAUMGARTE_ALPHA), np.concatenate([x0, v0]), t0, t1, cfg)
        return Trajectory(tr.t, np.concatenate([tr.y[:, :3], tr.y[:, 3:5]], axis=-1), tr.stats)
    raise OracleUnavailable(f"{desc.name} has no reference solution")


def engine_trajectory(desc, x0=None, eta0=None, t1=1.0, cfg=None, t0=0.0, break_astar=False):
    """Lagrange-side engine trajectory in the layout ``(x, eta_i)``."""
    x0 = desc.default_x if x0 is None else np.asarray(x0, dtype=float)
    eta0 = desc.default_eta if eta0 is None else np.asarray(eta0, dtype=float)
    rhs = LagrangeRHS(desc.lagrangian, break_astar=break_astar)
    return integrate(rhs, np.concatenate([x0, eta0]), t0, t1, cfg)
