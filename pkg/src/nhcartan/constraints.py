"""Nonholonomic constraints in solved form and the reduction coefficients.

Constraints are ``eta_alpha = phi_alpha(eta_i, x, t)`` with the dependent
parameters always forming the trailing block ``alpha = m..n-1``.  Shapes of the
callables (``na = n - m``):

==================  ===========================
``phi``             ``(..., na)``
``dphi_deta``       ``(..., na, m)``
``dphi_dx``         ``(..., na, n)``
``dphi_dt``         ``(..., na)``
``d2phi_deta2``     ``(..., na, m, m)``
``d2phi_deta_dx``   ``(..., na, m, n)``
``d2phi_deta_dt``   ``(..., na, m)``
==================  ===========================

Only ``phi`` and ``dphi_deta`` are mandatory; missing partials are obtained by
central differences (second partials differentiate the analytic
``dphi_deta`` once).
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _fd
from .errors import MissingCurvature, NumericalError
from .frame import batch_time, structure_coefficients, velocity_from_eta


@dataclass(frozen=True)
class ConstraintSet:
    m: int
    n: int
    phi: Callable
    dphi_deta: Callable
    dphi_dx: Optional[Callable] = None
    dphi_dt: Optional[Callable] = None
    d2phi_deta2: Optional[Callable] = None
    d2phi_deta_dx: Optional[Callable] = None
    d2phi_deta_dt: Optional[Callable] = None
    h_fd: float = _fd.H_FD
    label: str = "constraints"

    def __post_init__(self):
        if not 0 < self.m <= self.n:
            raise ValueError(f"need 0 < m <= n, got m={self.m}, n={self.n}")

    @property
    def na(self):
        return self.n - self.m

    @classmethod
    def none(cls, n):
        """The empty constraint set (holonomic system, ``m == n``)."""
        def phi(eta_i, x, t):
            return np.zeros(np.shape(eta_i)[:-1] + (0,))

        def dphi(eta_i, x, t):
            return np.zeros(np.shape(eta_i)[:-1] + (0, n))

        def zeros(*tail):
            return lambda eta_i, x, t: np.zeros(np.shape(eta_i)[:-1] + (0,) + tail)

        return cls(n, n, phi, dphi, dphi_dx=zeros(n), dphi_dt=zeros(),
                   d2phi_deta2=zeros(n, n), d2phi_deta_dx=zeros(n, n),
                   d2phi_deta_dt=zeros(n), label="none")

    # ---- evaluation helpers -------------------------------------------------

    def values(self, eta_i, x, t):
        out = np.asarray(self.phi(eta_i, x, batch_time(t, x)), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"{self.label}: non-finite constraint value")
        return out

    def jac_eta(self, eta_i, x, t):
        return np.asarray(self.dphi_deta(eta_i, x, batch_time(t, x)), dtype=float)

    def jac_x(self, eta_i, x, t):
        tb = batch_time(t, x)
        if self.dphi_dx is not None:
            return np.asarray(self.dphi_dx(eta_i, x, tb), dtype=float)
        return _fd.jacobian(lambda xx: self.phi(eta_i, xx, tb), x, self.h_fd)

    def jac_t(self, eta_i, x, t):
        tb = batch_time(t, x)
        if self.dphi_dt is not None:
            return np.asarray(self.dphi_dt(eta_i, x, tb), dtype=float)
        return _fd.derivative(lambda tt: self.phi(eta_i, x, tt), tb, self.h_fd)

    def hess_eta(self, eta_i, x, t):
        tb = batch_time(t, x)
        if self.d2phi_deta2 is not None:
            return np.asarray(self.d2phi_deta2(eta_i, x, tb), dtype=float)
        return self._fd_curvature(lambda: _fd.jacobian(lambda e: self.dphi_deta(e, x, tb), eta_i, self.h_fd))

    def hess_eta_x(self, eta_i, x, t):
        tb = batch_time(t, x)
        if self.d2phi_deta_dx is not None:
            return np.asarray(self.d2phi_deta_dx(eta_i, x, tb), dtype=float)
        return self._fd_curvature(lambda: _fd.jacobian(lambda xx: self.dphi_deta(eta_i, xx, tb), x, self.h_fd))

    def hess_eta_t(self, eta_i, x, t):
        tb = batch_time(t, x)
        if self.d2phi_deta_dt is not None:
            return np.asarray(self.d2phi_deta_dt(eta_i, x, tb), dtype=float)
        return self._fd_curvature(lambda: _fd.derivative(lambda tt: self.dphi_deta(eta_i, x, tt), tb, self.h_fd))

    def _fd_curvature(self, compute):
        try:
            out = np.asarray(compute(), dtype=float)
        except Exception as exc:  # closures may reject perturbed inputs
            raise MissingCurvature(f"{self.label}: cannot difference dphi_deta ({exc})") from exc
        if not np.all(np.isfinite(out)):
            raise MissingCurvature(f"{self.label}: non-finite second partials")
        return out


def complete_eta(cs, eta_i, x, t):
    """Full parameter vector ``(eta_i, phi_alpha(eta_i, x, t))``."""
    eta_i = np.asarray(eta_i, dtype=float)
    return np.concatenate([eta_i, cs.values(eta_i, x, t)], axis=-1)


def admissible_omega(cs, omega_i, eta_i, x, t):
    """Full virtual displacement with ``omega_alpha = dphi_alpha/deta_i omega_i``."""
    omega_i = np.asarray(omega_i, dtype=float)
    dep = np.einsum("...ai,...i->...a", cs.jac_eta(eta_i, x, t), omega_i)
    return np.concatenate([omega_i, dep], axis=-1)


def constraint_residual(cs, eta_full, x, t):
    """``f_alpha = eta_alpha - phi_alpha`` for a full parameter vector."""
    eta_full = np.asarray(eta_full, dtype=float)
    return eta_full[..., cs.m:] - cs.values(eta_full[..., :cs.m], x, t)


def chetaev_residual(cs, omega_full, eta_i, x, t):
    """``(df_alpha/deta_p) omega_p`` for ``f_alpha = eta_alpha - phi_alpha``."""
    omega_full = np.asarray(omega_full, dtype=float)
    G = cs.jac_eta(eta_i, x, t)
    return omega_full[..., cs.m:] - np.einsum("...ai,...i->...a", G, omega_full[..., :cs.m])


class ReductionCoefficients(NamedTuple):
    """K coefficients at one state.

    ``K0k[j, k] = K_{0j}^k``, ``Kqk[q, j, k] = K_{qj}^k``, ``K0a[j, a] = K_{0j}^alpha``,
    ``Kqa[q, j, a] = K_{qj}^alpha`` (``a = alpha - m``).  ``Astar`` is filled by
    :func:`a_star` callers that need it and is ``None`` otherwise.
    """

    K0k: np.ndarray
    Kqk: np.ndarray
    K0a: np.ndarray
    Kqa: np.ndarray
    Astar: Optional[np.ndarray] = None


def _k_full(C0, C, G, m):
    # K_{0j}^r = C_{0j}^r + C_{0b}^r dphi_b/deta_j, r over all n indices
    K0 = C0[..., :m, :] + np.einsum("...bj,...br->...jr", G, C0[..., m:, :])
    Kq = C[..., :, :m, :] + np.einsum("...bj,...qbr->...qjr", G, C[..., :, m:, :])
    return K0, Kq


def k_coefficients(frame, cs, x, eta_full, t, structure=None):
    """Assemble ``K_{0j}^k, K_{qj}^k, K_{0j}^alpha, K_{qj}^alpha``."""
    m = cs.m
    eta_full = np.asarray(eta_full, dtype=float)
    if structure is None:
        structure = structure_coefficients(frame, x, t, check=False)
    G = cs.jac_eta(eta_full[..., :m], x, t)
    K0, Kq = _k_full(structure.C0, structure.C, G, m)
    return ReductionCoefficients(K0[..., :m], Kq[..., :m], K0[..., m:], Kq[..., m:])


def starred_fields(frame, cs, x, eta_i, t):
    """Rows ``X*_j = X_j + dphi_b/deta_j X_b`` as components along ``(t, x)``; shape (..., m, n+1)."""
    m = cs.m
    M = frame.matrix(x, t)
    G = cs.jac_eta(eta_i, x, t)
    return M[..., 1:m + 1, :] + np.einsum("...bj,...bv->...jv", G, M[..., m + 1:, :])


def starred_apply(frame, cs, j, G, x, eta_i, t, grad=None):
    """``X*_j G`` for a scalar field ``G(x, t)``."""
    from .frame import full_gradient
    g = full_gradient(G, x, t, grad=grad, h_fd=frame.h_fd)
    return np.einsum("...v,...v->...", starred_fields(frame, cs, x, eta_i, t)[..., j, :], g)


class AStar(NamedTuple):
    """``(A_j^alpha)*`` split as ``free + linear . eta_dot``.

    ``free[a, j]`` is the eta_dot-independent part and ``linear[a, j, i]`` the
    coefficient of ``eta_dot_i``; ``value`` is filled when ``eta_dot`` is given.
    """

    free: np.ndarray
    linear: np.ndarray
    value: Optional[np.ndarray] = None


def a_star(frame, cs, x, eta_i, t, eta_dot=None, structure=None):
    """Second-viewpoint coefficients ``(A_j^alpha)*``.

    The total derivative ``d/dt(dphi_alpha/deta_j)`` is expanded along the
    actual motion with ``xdot`` reconstructed from the completed parameters.
    """
    m = cs.m
    eta_i = np.asarray(eta_i, dtype=float)
    eta = complete_eta(cs, eta_i, x, t)
    if structure is None:
        structure = structure_coefficients(frame, x, t, check=False)
    G = cs.jac_eta(eta_i, x, t)
    K0, Kq = _k_full(structure.C0, structure.C, G, m)
    # K_j^r eta-contracted: K_{0j}^r + K_{qj}^r eta_q
    Kj = K0 + np.einsum("...qjr,...q->...jr", Kq, eta)

    xdot = velocity_from_eta(frame, x, eta, t)
    S = starred_fields(frame, cs, x, eta_i, t)
    Xphi = np.einsum("...jq,...aq->...aj", S[..., 1:], cs.jac_x(eta_i, x, t))

    free = (cs.hess_eta_t(eta_i, x, t)
            + np.einsum("...ajq,...q->...aj", cs.hess_eta_x(eta_i, x, t), xdot)
            - Xphi
            + np.swapaxes(Kj[..., m:], -1, -2)
            - np.einsum("...jk,...ak->...aj", Kj[..., :m], G))
    linear = cs.hess_eta(eta_i, x, t)
    value = None
    if eta_dot is not None:
        value = free + np.einsum("...aji,...i->...aj", linear, np.asarray(eta_dot, dtype=float))
    return AStar(free, linear, value)


def a_holder(frame, cs, x, eta_i, t, eta_dot, structure=None):
    """First-viewpoint coefficients ``A_i^alpha`` assembled term by term as printed.

    Diagnostic only; returned with shape ``(..., na, m)`` for side-by-side
    comparison with :func:`a_star`.
    """
    m = cs.m
    eta_i = np.asarray(eta_i, dtype=float)
    eta = complete_eta(cs, eta_i, x, t)
    if structure is None:
        structure = structure_coefficients(frame, x, t, check=False)
    C0, C = structure.C0, structure.C
    G = cs.jac_eta(eta_i, x, t)
    M = frame.matrix(x, t)
    xdot = velocity_from_eta(frame, x, eta, t)
    dphidx = cs.jac_x(eta_i, x, t)

    # B[p, r] = C_{0p}^r + C_{qp}^r eta_q
    B = C0 + np.einsum("...qpr,...q->...pr", C, eta)
    dt_dphi = (cs.hess_eta_t(eta_i, x, t)
               + np.einsum("...aiq,...q->...ai", cs.hess_eta_x(eta_i, x, t), xdot)
               + np.einsum("...aij,...j->...ai", cs.hess_eta(eta_i, x, t), eta_dot))
    Xp_phi = np.einsum("...pq,...aq->...ap", M[..., 1:, 1:], dphidx)
    out = (dt_dphi
           - Xp_phi[..., :m]
           - np.einsum("...bi,...ab->...ai", G, Xp_phi[..., m:])
           + np.swapaxes(B[..., :m, m:], -1, -2)
           + np.einsum("...ba,...bi->...ai", B[..., m:, m:], G)
           - np.einsum("...aj,...ij->...ai", G, B[..., :m, :m])
           - np.einsum("...aj,...bj,...bi->...ai", G, B[..., m:, :m], G))
    return out
