"""Self-check suite aggregated by ``nhcartan check``.

Each check returns a :class:`CheckResult`; informational rows carry
``passed=None`` and never affect the exit status.
"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import zoo
from .constraints import (a_star, admissible_omega, chetaev_residual, complete_eta,
                          constraint_residual)
from .dynamics import (HamiltonRHS, LagrangeRHS, LagrangeState, dalembert_residual,
                       eom_rhs_lagrange, hamiltonian_reduced, legendre_invert, reduced_momenta)
from .errors import NHError
from .frame import (VariationProbe, eta_from_velocity, structure_coefficients,
                    velocity_from_eta, zeta)
from .integrate import IntegratorConfig, integrate
from .invariants import harmonic_loop, max_drift
from .transposition import verify_transposition


@dataclass
class CheckResult:
    model: str
    check: str
    value: float
    threshold: float
    passed: Optional[bool]
    note: str = ""

    def as_dict(self):
        return asdict(self)


def _res(model, check, value, threshold, note=""):
    value = float(value)
    return CheckResult(model, check, value, threshold, bool(np.isfinite(value) and value <= threshold), note)


def random_states(desc, k=8, seed=1):
    """Admissible random states near the model default (inside the SO(3) band)."""
    rng = np.random.default_rng(seed)
    x = desc.default_x + 0.3 * rng.standard_normal((k, desc.n))
    eta = desc.default_eta + 0.3 * rng.standard_normal((k, desc.m))
    return x, eta, 0.1 * rng.standard_normal(k)


def _reference_curve(desc):
    """A smooth non-trivial configuration curve for transposition checks."""
    x0, e0 = desc.default_x, np.r_[desc.default_eta, np.zeros(desc.n - desc.m)] + 0.3
    w = 0.7 + 0.2 * np.arange(desc.n)

    def x_of_t(t):
        t = np.asarray(t, dtype=float)[..., None]
        return x0 + 0.2 * np.sin(w * t) + 0.1 * e0 * t

    def xdot_of_t(t):
        t = np.asarray(t, dtype=float)[..., None]
        return 0.2 * w * np.cos(w * t) + 0.1 * e0 + 0 * t

    return x_of_t, xdot_of_t


def transposition_probe(n):
    c = 0.5 + 0.25 * np.arange(n)
    return VariationProbe(
        omega=lambda t: np.stack([np.sin(t * ci) + 0.2 * t**2 for ci in c], axis=-1),
        Omega0=lambda t: 0.3 + 0.1 * t * np.cos(t),
        omega_dot=lambda t: np.stack([ci * np.cos(t * ci) + 0.4 * t for ci in c], axis=-1),
        Omega0_dot=lambda t: 0.1 * np.cos(t) - 0.1 * t * np.sin(t),
    )


def check_frame(desc):
    x, eta, t = random_states(desc)
    out = []
    sc = structure_coefficients(desc.frame, x, t, check=True)
    anti = max(np.max(np.abs(sc.C + np.swapaxes(sc.C, -3, -2))), 0.0)
    out.append(_res(desc.name, "structure_antisymmetry", anti, 1e-12))
    z = zeta(desc.frame, x, t)
    out.append(_res(desc.name, "zeta_inverse", np.max(np.abs(z @ desc.frame.block(x, t) - np.eye(desc.n))), 1e-12))
    full = complete_eta(desc.lagrangian.cs, eta, x, t)
    xd = velocity_from_eta(desc.frame, x, full, t)
    rt = np.max(np.abs(eta_from_velocity(desc.frame, x, xd, t) - full))
    out.append(_res(desc.name, "frame_round_trip", rt, 1e-10))
    return out


def check_transposition(desc):
    x_of_t, xdot_of_t = _reference_curve(desc)
    rep = verify_transposition(desc.frame, x_of_t, transposition_probe(desc.n), 0.0, 2.0,
                               epsilon=1e-3, xdot_of_t=xdot_of_t)
    out = []
    for key, pair in (("synchronous", rep.synchronous), ("asynchronous", rep.asynchronous),
                      ("functional", rep.functional)):
        r = pair[0] / pair[1] if pair[1] > 0 else float("nan")
        if pair[0] < 1e-9:
            # identities that hold exactly for this frame: residual is round-off
            out.append(_res(desc.name, f"transposition_{key}", pair[0], 1e-9, "exact"))
        else:
            ok = 1.7 <= r <= 2.3
            out.append(CheckResult(desc.name, f"transposition_{key}_ratio", r, 2.0, ok,
                                   f"residual {pair[0]:.2e}"))
    return out


def check_constraints(desc):
    cs = desc.lagrangian.cs
    x, eta, t = random_states(desc)
    om_i = np.random.default_rng(2).standard_normal(eta.shape)
    om = admissible_omega(cs, om_i, eta, x, t)
    full = complete_eta(cs, eta, x, t)
    return [
        _res(desc.name, "chetaev_residual", np.max(np.abs(chetaev_residual(cs, om, eta, x, t)), initial=0.0), 1e-14),
        _res(desc.name, "constraint_admissible", np.max(np.abs(constraint_residual(cs, full, x, t)), initial=0.0), 0.0),
    ]


def check_legendre(desc):
    model = desc.lagrangian
    x, eta, t = random_states(desc)
    y = reduced_momenta(model, eta, x, t)
    back = legendre_invert(model, x, y, t)
    out = [_res(desc.name, "legendre_round_trip", np.max(np.abs(back - eta)), 1e-10)]
    h = 1e-5
    dual = np.zeros_like(eta)
    for j in range(desc.m):
        e = np.zeros(desc.m)
        e[j] = h
        hp = hamiltonian_reduced(model, x, y + e, t, guess=back)
        hm = hamiltonian_reduced(model, x, y - e, t, guess=back)
        dual[:, j] = (hp - hm) / (2 * h)
    out.append(_res(desc.name, "hamiltonian_duality", np.max(np.abs(dual - back)), 1e-6))
    return out


def _trajectory(desc, break_astar, t1=2.0, rtol=1e-11):
    cfg = IntegratorConfig(rtol=rtol, atol=rtol * 1e-2, sample_interval=0.25)
    rhs = LagrangeRHS(desc.lagrangian, break_astar)
    return integrate(rhs, np.r_[desc.default_x, desc.default_eta], 0.0, t1, cfg), cfg


def check_dynamics(desc, break_astar=False):
    model = desc.lagrangian
    n, m = desc.n, desc.m
    tr, cfg = _trajectory(desc, break_astar)
    x, eta = tr.y[:, :n], tr.y[:, n:]
    # equations as integrated, residual from the intact full-space bracket
    _, ed = eom_rhs_lagrange(model, LagrangeState(tr.t, x, eta), break_astar)
    worst = 0.0
    for j in range(m):
        om = np.zeros_like(eta)
        om[:, j] = 1.0
        r = dalembert_residual(model, LagrangeState(tr.t, x, eta), ed, om)
        p = reduced_momenta(model, eta, x, tr.t)
        worst = max(worst, float(np.max(np.abs(r) / (1.0 + np.max(np.abs(p))))))
    out = [_res(desc.name, "dalembert_residual", worst, 1e-8)]

    y0 = reduced_momenta(model, desc.default_eta, desc.default_x, 0.0)
    th = integrate(HamiltonRHS(model, break_astar), np.r_[desc.default_x, y0], 0.0, tr.t[-1], cfg)
    yl = reduced_momenta(model, eta, x, tr.t)
    dev = max(np.max(np.abs(th.y[:, :n] - x)), np.max(np.abs(th.y[:, n:] - yl)))
    out.append(_res(desc.name, "formulation_agreement", dev, 1e-7))

    if desc.reference != "none":
        o = zoo.oracle_trajectory(desc, desc.default_x, desc.default_eta, tr.t[-1], cfg)
        thr = 1e-6 if desc.reference == "dae_multiplier" else 1e-8
        out.append(_res(desc.name, f"oracle_{desc.reference}", np.max(np.abs(o.y - tr.y)), thr))
    if model.conservative and desc.constraint_type != "nonlinear":
        H = hamiltonian_reduced(model, x, yl, tr.t, eta_i=eta)
        out.append(_res(desc.name, "energy_drift", np.max(np.abs(H - H[0])), 1e-8))
    return out


def _loop_for(desc, N):
    model = desc.lagrangian
    y0 = reduced_momenta(model, desc.default_eta, desc.default_x, 0.0)
    amp_x = np.zeros(desc.n)
    amp_x[: min(2, desc.n)] = 0.1
    amp_y = np.zeros(desc.m)
    amp_y[0] = 0.1
    return harmonic_loop(0.0, desc.default_x, y0, x_cos=amp_x, y_sin=amp_y, samples=N)


def astar_hypothesis(desc, N=32):
    """``max |(A_j^alpha)* p_alpha|`` over a loop of states: the term whose
    vanishing the integral-invariant theorems rely on."""
    model = desc.lagrangian
    cs = model.cs
    if cs.na == 0:
        return 0.0
    pts = _loop_for(desc, N).points()
    eta = legendre_invert(model, pts.x, pts.ystar, pts.t)
    _, ed = eom_rhs_lagrange(model, LagrangeState(pts.t, pts.x, eta))
    A = a_star(desc.frame, cs, pts.x, eta, pts.t, eta_dot=ed)
    full = complete_eta(cs, eta, pts.x, pts.t)
    pa = model.grad_eta(full, pts.x, pts.t)[:, desc.m:]
    return float(np.max(np.abs(np.einsum("kaj,ka->kj", A.value, pa))))


def check_invariants(desc, break_astar=False):
    hyp = astar_hypothesis(desc)
    if hyp > 1e-12:
        return [CheckResult(desc.name, "astar_hypothesis_term", hyp, 0.0, None,
                            "A* p nonzero: integral invariants not expected; not asserted")]
    model = desc.lagrangian
    loop = _loop_for(desc, 128)
    cfg = IntegratorConfig(rtol=1e-10, atol=1e-12)
    grid = np.linspace(0.0, 1.0, 5)
    out = []
    d, _, _ = max_drift(loop, model, cfg, lambda s: 2.0 + 0.5 * np.sin(2 * np.pi * s), grid, break_astar)
    out.append(_res(desc.name, "cartan_invariant_drift", d, 1e-5))
    d1, _, _ = max_drift(loop, model, cfg, lambda s: 2.0 + 0 * s, grid, break_astar, linear=True)
    out.append(_res(desc.name, "linear_invariant_drift", d1, 1e-5))
    return out


SECTIONS = (
    ("frame", lambda d, b: check_frame(d)),
    ("transposition", lambda d, b: check_transposition(d)),
    ("constraints", lambda d, b: check_constraints(d)),
    ("legendre", lambda d, b: check_legendre(d)),
    ("dynamics", check_dynamics),
    ("invariants", check_invariants),
)


def run_checks(models=None, break_astar=False):
    results = []
    for name in models or zoo.model_names():
        desc = zoo.get_model(name)
        for section, fn in SECTIONS:
            try:
                results.extend(fn(desc, break_astar))
            except NHError as exc:
                results.append(CheckResult(name, section, float("nan"), float("nan"), False,
                                           f"{type(exc).__name__}: {exc}"))
    return results
