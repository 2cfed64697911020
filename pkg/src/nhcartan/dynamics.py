"""Reduced Lagrangian, Legendre transform and multiplier-free equations of motion.

The reduced Lagrangian ``L*(eta_i, x, t) = L(eta_i, phi(eta_i, x, t), x, t)``
drives both formulations:

* Lagrange side, unknowns ``(x, eta_i)``:
  ``d/dt dL*/deta_j = (K_{0j}^k + K_{qj}^k eta_q) dL*/deta_k + X*_j L*
  + (A_j^alpha)* (dL/deta_alpha)*``.
  Because ``(A_j^alpha)*`` contains ``d/dt(dphi_alpha/deta_j)`` the equations
  are implicit in ``eta_dot``; they are affine in it, so one m x m solve is
  exact.
* Hamilton side, unknowns ``(x, y*)`` with ``y*_j = dL*/deta_j``:
  ``ydot*_j = -X*_j H* + (K_{0j}^k + K_{qj}^k eta_q) dL*/deta_k
  + (A_j^alpha)* (dL/deta_alpha)*``, the ``eta_dot`` inside ``A*`` taken from
  the Lagrange-side solve at the mapped state.

``X*_j H*`` (at fixed ``y*``) is evaluated as ``-X*_j L*`` (at fixed ``eta``),
which is exact for the Legendre pair.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _fd
from .constraints import ConstraintSet, _k_full, a_star, admissible_omega, complete_eta, starred_fields
from .errors import NewtonDivergence, SingularMass
from .frame import GroupFrame, batch_time, structure_coefficients, velocity_from_eta

RCOND_MIN = 1e-10


@dataclass(frozen=True)
class LagrangianModel:
    """Lagrangian ``L(eta_full, x, t)`` on a group frame, optionally constrained.

    Optional partials (shapes with ``n`` full parameters): ``dL_deta (..., n)``,
    ``d2L_deta2 (..., n, n)``, ``d2L_deta_dx (..., n, n)`` indexed ``[p, q]`` =
    ``d2L/deta_p dx_q``, ``d2L_deta_dt (..., n)``, ``dL_dx (..., n)``,
    ``dL_dt (...)``.  Missing ones are differenced.
    """

    frame: GroupFrame
    L: Callable
    constraints: Optional[ConstraintSet] = None
    dL_deta: Optional[Callable] = None
    d2L_deta2: Optional[Callable] = None
    d2L_deta_dx: Optional[Callable] = None
    d2L_deta_dt: Optional[Callable] = None
    dL_dx: Optional[Callable] = None
    dL_dt: Optional[Callable] = None
    conservative: bool = False
    h_fd: float = _fd.H_FD
    name: str = "model"
    cs: ConstraintSet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cs = self.constraints if self.constraints is not None else ConstraintSet.none(self.frame.n)
        if cs.n != self.frame.n:
            raise ValueError(f"constraint n={cs.n} does not match frame n={self.frame.n}")
        object.__setattr__(self, "cs", cs)

    @property
    def n(self):
        return self.frame.n

    @property
    def m(self):
        return self.cs.m

    # ---- partials of the full Lagrangian ------------------------------------

    def value(self, eta, x, t):
        return np.asarray(self.L(eta, x, batch_time(t, x)), dtype=float)

    def grad_eta(self, eta, x, t):
        tb = batch_time(t, x)
        if self.dL_deta is not None:
            return np.asarray(self.dL_deta(eta, x, tb), dtype=float)
        return _fd.jacobian(lambda e: self.L(e, x, tb), eta, self.h_fd)

    def _grad_eta_fd_step(self):
        # pure second differences of L need the square-root-scaled step
        return self.h_fd if self.dL_deta is not None else np.sqrt(self.h_fd)

    def hess_eta(self, eta, x, t):
        tb = batch_time(t, x)
        if self.d2L_deta2 is not None:
            return np.asarray(self.d2L_deta2(eta, x, tb), dtype=float)
        return _fd.jacobian(lambda e: self.grad_eta(e, x, tb), eta, self._grad_eta_fd_step())

    def hess_eta_x(self, eta, x, t):
        tb = batch_time(t, x)
        if self.d2L_deta_dx is not None:
            return np.asarray(self.d2L_deta_dx(eta, x, tb), dtype=float)
        return _fd.jacobian(lambda xx: self.grad_eta(eta, xx, tb), x, self._grad_eta_fd_step())

    def hess_eta_t(self, eta, x, t):
        tb = batch_time(t, x)
        if self.d2L_deta_dt is not None:
            return np.asarray(self.d2L_deta_dt(eta, x, tb), dtype=float)
        return _fd.derivative(lambda tt: self.grad_eta(eta, x, tt), tb, self._grad_eta_fd_step())

    def grad_x(self, eta, x, t):
        tb = batch_time(t, x)
        if self.dL_dx is not None:
            return np.asarray(self.dL_dx(eta, x, tb), dtype=float)
        return _fd.jacobian(lambda xx: self.L(eta, xx, tb), x, self.h_fd)

    def grad_t(self, eta, x, t):
        tb = batch_time(t, x)
        if self.dL_dt is not None:
            return np.asarray(self.dL_dt(eta, x, tb), dtype=float)
        return _fd.derivative(lambda tt: self.L(eta, x, tt), tb, self.h_fd)


def quadratic_lagrangian(frame, mass, potential, potential_grad, constraints=None,
                         name="model", conservative=True):
    """``L = 1/2 eta^T M eta - V(x)`` with a constant mass matrix and analytic partials."""
    M = np.asarray(mass, dtype=float)
    n = frame.n

    def L(eta, x, t):
        return 0.5 * np.einsum("...p,pq,...q->...", eta, M, eta) - potential(x)

    def dL_deta(eta, x, t):
        return np.einsum("pq,...q->...p", M, eta)

    def d2L_deta2(eta, x, t):
        return np.broadcast_to(M, np.shape(eta)[:-1] + (n, n))

    def zeros(*tail):
        return lambda eta, x, t: np.zeros(np.shape(eta)[:-1] + tail)

    def dL_dx(eta, x, t):
        return -np.asarray(potential_grad(x), dtype=float)

    return LagrangianModel(frame, L, constraints, dL_deta=dL_deta, d2L_deta2=d2L_deta2,
                           d2L_deta_dx=zeros(n, n), d2L_deta_dt=zeros(n), dL_dx=dL_dx,
                           dL_dt=zeros(), conservative=conservative, name=name)


@dataclass
class PhaseState:
    """Point ``(t, x, y*)`` of the extended reduced phase space."""

    t: float
    x: np.ndarray
    ystar: np.ndarray


@dataclass
class LagrangeState:
    """Point ``(t, x, eta_i)`` for the Lagrange-side equations."""

    t: float
    x: np.ndarray
    eta_i: np.ndarray


# ---- reduced quantities -----------------------------------------------------

def reduced_lagrangian(model, eta_i, x, t):
    """``L*(eta_i, x, t)``."""
    return model.value(complete_eta(model.cs, eta_i, x, t), x, t)


def _momenta_and_hessian(model, eta_i, x, t, hessian=True):
    cs = model.cs
    eta = complete_eta(cs, eta_i, x, t)
    G = cs.jac_eta(eta_i, x, t)
    if model.dL_deta is None:
        f = lambda e: reduced_lagrangian(model, e, x, t)
        ystar = _fd.jacobian(f, eta_i, model.h_fd)
        if not hessian:
            return ystar, None
        Mr = _fd.jacobian(lambda e: _fd.jacobian(f, e, np.sqrt(model.h_fd)), eta_i, np.sqrt(model.h_fd))
        return ystar, 0.5 * (Mr + np.swapaxes(Mr, -1, -2))
    p = model.grad_eta(eta, x, t)
    pa = p[..., cs.m:]
    ystar = p[..., :cs.m] + np.einsum("...aj,...a->...j", G, pa)
    if not hessian:
        return ystar, None
    P = np.concatenate([np.broadcast_to(np.eye(cs.m), G.shape[:-2] + (cs.m, cs.m)), G], axis=-2)
    Lee = model.hess_eta(eta, x, t)
    Mr = (np.einsum("...pj,...pr,...rk->...jk", P, Lee, P)
          + np.einsum("...a,...ajk->...jk", pa, cs.hess_eta(eta_i, x, t)))
    return ystar, Mr


def reduced_momenta(model, eta_i, x, t):
    """``y*_j = dL*/deta_j``."""
    return _momenta_and_hessian(model, eta_i, x, t, hessian=False)[0]


def reduced_hessian(model, eta_i, x, t):
    """``d2 L* / deta_j deta_k``."""
    return _momenta_and_hessian(model, eta_i, x, t)[1]


def _rcond(A):
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.linalg.cond(A)
    return np.where(np.isfinite(c), 1.0 / c, 0.0)


def legendre_invert(model, x, ystar, t, guess=None, tol=1e-12, max_iter=50):
    """Solve ``dL*/deta(eta_i) = y*`` by Newton's method on the reduced Hessian.

    ``tol`` is absolute, scaled by ``max(1, |y*|)``.  Raises NewtonDivergence
    when the Hessian is singular, an iterate is non-finite, or ``max_iter``
    iterations do not converge.
    """
    ystar = np.asarray(ystar, dtype=float)
    eta = np.zeros_like(ystar) if guess is None else np.array(guess, dtype=float, copy=True)
    eta = np.broadcast_to(eta, ystar.shape).copy()
    tol_abs = tol * max(1.0, float(np.max(np.abs(ystar), initial=0.0)))
    for _ in range(max_iter):
        ys, Mr = _momenta_and_hessian(model, eta, x, t)
        r = ys - ystar
        if np.max(np.abs(r), initial=0.0) <= tol_abs:
            return eta
        if np.any(_rcond(Mr) < RCOND_MIN):
            raise NewtonDivergence("reduced Hessian is singular during Legendre inversion")
        eta = eta - np.linalg.solve(Mr, r[..., None])[..., 0]
        if not np.all(np.isfinite(eta)):
            raise NewtonDivergence("non-finite Newton iterate in Legendre inversion")
    r = reduced_momenta(model, eta, x, t) - ystar
    if np.max(np.abs(r), initial=0.0) <= tol_abs:
        return eta
    raise NewtonDivergence(f"Legendre inversion did not converge in {max_iter} iterations "
                           f"(residual {np.max(np.abs(r)):.3e})")


def hamiltonian_reduced(model, x, ystar, t, guess=None, eta_i=None):
    """``H* = eta_j y*_j - L*``; pass ``eta_i`` to skip the Legendre inversion."""
    if eta_i is None:
        eta_i = legendre_invert(model, x, ystar, t, guess=guess)
    return np.einsum("...j,...j->...", eta_i, ystar) - reduced_lagrangian(model, eta_i, x, t)


def to_phase(model, state):
    return PhaseState(state.t, np.asarray(state.x, float), reduced_momenta(model, state.eta_i, state.x, state.t))


def to_lagrange(model, state, guess=None):
    return LagrangeState(state.t, np.asarray(state.x, float),
                         legendre_invert(model, state.x, state.ystar, state.t, guess=guess))


# ---- equations of motion ----------------------------------------------------

class _Assembly:
    """Every term of the reduced equations at one (batch of) state(s)."""

    def __init__(self, model, x, eta_i, t, break_astar=False):
        cs = model.cs
        m = cs.m
        frame = model.frame
        x = np.asarray(x, dtype=float)
        eta_i = np.asarray(eta_i, dtype=float)
        eta = complete_eta(cs, eta_i, x, t)
        sc = structure_coefficients(frame, x, t, check=False)
        G = cs.jac_eta(eta_i, x, t)
        p = model.grad_eta(eta, x, t)
        pa = p[..., m:]
        batch = G.shape[:-2]
        P = np.concatenate([np.broadcast_to(np.eye(m), batch + (m, m)), G], axis=-2)

        Lee = model.hess_eta(eta, x, t)
        Lex = model.hess_eta_x(eta, x, t)
        Let = model.hess_eta_t(eta, x, t)
        H2 = cs.hess_eta(eta_i, x, t)
        dphidx = cs.jac_x(eta_i, x, t)
        dphidt = cs.jac_t(eta_i, x, t)

        self.eta = eta
        self.ystar = p[..., :m] + np.einsum("...aj,...a->...j", G, pa)
        self.xdot = velocity_from_eta(frame, x, eta, t)
        self.pa = pa
        self.M = (np.einsum("...pj,...pr,...rk->...jk", P, Lee, P)
                  + np.einsum("...a,...ajk->...jk", pa, H2))

        # partial derivatives of dL*/deta_j along x and t at fixed eta_i
        n = model.n
        deta_dx = np.concatenate([np.zeros(batch + (m, n)), dphidx], axis=-2)
        deta_dt = np.concatenate([np.zeros(batch + (m,)), dphidt], axis=-1)
        dLs_dx = (np.einsum("...ajq,...a->...jq", cs.hess_eta_x(eta_i, x, t), pa)
                  + np.einsum("...pj,...pq->...jq", P,
                              np.einsum("...pr,...rq->...pq", Lee, deta_dx) + Lex))
        dLs_dt = (np.einsum("...aj,...a->...j", cs.hess_eta_t(eta_i, x, t), pa)
                  + np.einsum("...pj,...p->...j", P, np.einsum("...pr,...r->...p", Lee, deta_dt) + Let))
        self.advection = np.einsum("...jq,...q->...j", dLs_dx, self.xdot) + dLs_dt

        # X*_j L* with L* differentiated at fixed eta_i
        Lsx = model.grad_x(eta, x, t) + np.einsum("...aq,...a->...q", dphidx, pa)
        S = starred_fields(frame, cs, x, eta_i, t)
        self.XsLs = np.einsum("...jq,...q->...j", S[..., 1:], Lsx)

        K0, Kq = _k_full(sc.C0, sc.C, G, m)
        Kj = K0 + np.einsum("...qjr,...q->...jr", Kq, eta)
        self.KL = np.einsum("...jk,...k->...j", Kj[..., :m], self.ystar)

        if break_astar or cs.na == 0:
            self.A_free = np.zeros(batch + (m,))
            self.A_lin = np.zeros(batch + (m, m))
        else:
            A = a_star(frame, cs, x, eta_i, t, structure=sc)
            self.A_free = np.einsum("...aj,...a->...j", A.free, pa)
            self.A_lin = np.einsum("...aji,...a->...ji", A.linear, pa)

    def eta_dot(self):
        lhs = self.M - self.A_lin
        rhs = self.KL + self.XsLs + self.A_free - self.advection
        if np.any(_rcond(lhs) < RCOND_MIN):
            raise SingularMass("equations-of-motion matrix is singular")
        return np.linalg.solve(lhs, rhs[..., None])[..., 0]


def eom_rhs_lagrange(model, state, break_astar=False):
    """``(xdot, eta_dot)`` at a :class:`LagrangeState` (fields may be batched)."""
    asm = _Assembly(model, state.x, state.eta_i, state.t, break_astar)
    return asm.xdot, asm.eta_dot()


def _hamilton_rates(model, x, ystar, t, guess=None, break_astar=False):
    eta_i = legendre_invert(model, x, ystar, t, guess=guess)
    asm = _Assembly(model, x, eta_i, t, break_astar)
    eta_dot = asm.eta_dot()
    # -X*_j H* == X*_j L*
    ydot = asm.XsLs + asm.KL + asm.A_free + np.einsum("...ji,...i->...j", asm.A_lin, eta_dot)
    return asm.xdot, ydot, eta_i


def eom_rhs_hamilton(model, state, guess=None, break_astar=False):
    """``(xdot, ystar_dot)`` at a :class:`PhaseState`."""
    xdot, ydot, _ = _hamilton_rates(model, state.x, state.ystar, state.t, guess, break_astar)
    return xdot, ydot


def dalembert_residual(model, state, eta_dot, omega_i):
    """Bracket of the d'Alembert-Lagrange-Poincare equation contracted with the
    admissible virtual displacement built from ``omega_i``.

    Assembled in the full parameter space directly from ``L``, ``C`` and ``phi``
    (no reduced quantities), so it is an independent check on the reduced
    equations.
    """
    cs = model.cs
    frame = model.frame
    x, t = np.asarray(state.x, float), state.t
    eta_i = np.asarray(state.eta_i, float)
    eta_dot = np.asarray(eta_dot, float)
    eta = complete_eta(cs, eta_i, x, t)
    xdot = velocity_from_eta(frame, x, eta, t)
    G = cs.jac_eta(eta_i, x, t)
    phidot = (np.einsum("...ai,...i->...a", G, eta_dot)
              + np.einsum("...aq,...q->...a", cs.jac_x(eta_i, x, t), xdot)
              + cs.jac_t(eta_i, x, t))
    eta_dot_full = np.concatenate([eta_dot, phidot], axis=-1)
    p = model.grad_eta(eta, x, t)
    dp = (np.einsum("...pr,...r->...p", model.hess_eta(eta, x, t), eta_dot_full)
          + np.einsum("...pq,...q->...p", model.hess_eta_x(eta, x, t), xdot)
          + model.hess_eta_t(eta, x, t))
    sc = structure_coefficients(frame, x, t, check=False)
    XL = np.einsum("...pq,...q->...p", frame.block(x, t), model.grad_x(eta, x, t))
    E = (dp
         - np.einsum("...pq,...q->...p", sc.C0, p)
         - np.einsum("...qpr,...q,...r->...p", sc.C, eta, p)
         - XL)
    omega = admissible_omega(cs, omega_i, eta_i, x, t)
    return np.einsum("...p,...p->...", E, omega)


# ---- right-hand sides for the integrator ------------------------------------

class LagrangeRHS:
    """State vector ``(x, eta_i)``; leading batch axes are allowed."""

    def __init__(self, model, break_astar=False):
        self.model = model
        self.break_astar = break_astar

    def __call__(self, t, z):
        n = self.model.n
        xdot, ed = eom_rhs_lagrange(self.model, LagrangeState(t, z[..., :n], z[..., n:]), self.break_astar)
        return np.concatenate([xdot, ed], axis=-1)


class HamiltonRHS:
    """State vector ``(x, y*)``; keeps a per-instance Newton warm start.

    Build one instance per trajectory (or per batch); instances are not meant
    to be shared between concurrently integrated trajectories.
    """

    def __init__(self, model, break_astar=False):
        self.model = model
        self.break_astar = break_astar
        self._eta = None

    def __call__(self, t, z):
        n = self.model.n
        x, y = z[..., :n], z[..., n:]
        guess = self._eta if self._eta is not None and self._eta.shape == y.shape else None
        xdot, ydot, eta = _hamilton_rates(self.model, x, y, t, guess, self.break_astar)
        self._eta = eta
        return np.concatenate([xdot, ydot], axis=-1)
