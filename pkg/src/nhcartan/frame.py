"""Group frames: the operators X_0, X_p and their structure coefficients.

Array conventions (all 0-based):

* ``xi(x, t)`` has shape ``(..., n+1, n+1)``; row ``mu`` holds the components
  of ``X_mu`` along ``(d/dt, d/dx_1, ..., d/dx_n)``.  Row 0 is the drift
  operator, so ``xi[..., 0, 0] == 1`` and ``xi[..., p, 0] == 0`` for ``p >= 1``.
* ``xi_jacobian(x, t)`` has shape ``(..., n+1, n+1, n+1)``; the last axis is the
  derivative with respect to ``(t, x_1, ..., x_n)``.
* Structure coefficients are returned as ``C0[..., p, q] = C_{0p}^q`` and
  ``C[..., p, q, r] = C_{pq}^r`` with ``p, q, r`` running over ``0..n-1``.

Every function accepts arbitrary leading batch axes on ``x``; ``t`` may be a
scalar or broadcast against the batch shape.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _fd
from .errors import FrameInconsistency, SingularFrame


def batch_time(t, x):
    """Broadcast ``t`` to the batch shape of ``x``."""
    return np.broadcast_to(np.asarray(t, dtype=float), np.shape(x)[:-1])


@dataclass(frozen=True)
class GroupFrame:
    """A transitive family of first-order operators on configuration space.

    Closures passed in must be reentrant; the frame itself is immutable and
    safe to share between threads.
    """

    n: int
    xi: Callable
    xi_jacobian: Optional[Callable] = None
    structure: Optional[Callable] = None
    h_fd: float = _fd.H_FD
    rcond_min: float = 1e-10
    tol_structure: float = 1e-7
    name: str = "frame"

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.n,):
            raise ValueError(f"{self.name}: expected x[..., {self.n}], got shape {x.shape}")
        return x

    def matrix(self, x, t):
        """Full ``(n+1) x (n+1)`` coefficient matrix, validated."""
        x = self._check_x(x)
        m = np.asarray(self.xi(x, batch_time(t, x)), dtype=float)
        if m.shape[-2:] != (self.n + 1, self.n + 1):
            raise FrameInconsistency(f"{self.name}: xi returned shape {m.shape}")
        if np.any(m[..., 0, 0] != 1.0) or np.any(m[..., 1:, 0] != 0.0):
            raise FrameInconsistency(f"{self.name}: xi_0^0 must be 1 and xi_p^0 must be 0")
        return m

    def jacobian(self, x, t):
        """Derivatives of xi with respect to ``(t, x_1..x_n)``."""
        x = self._check_x(x)
        tb = batch_time(t, x)
        if self.xi_jacobian is not None:
            return np.asarray(self.xi_jacobian(x, tb), dtype=float)
        z = np.concatenate([tb[..., None], x], axis=-1)
        return _fd.jacobian(lambda zz: self.xi(zz[..., 1:], zz[..., 0]), z, self.h_fd)

    def block(self, x, t):
        """The n x n block ``xi_p^q`` (p, q >= 1)."""
        return self.matrix(x, t)[..., 1:, 1:]

    def drift(self, x, t):
        """The drift column ``xi_0^q``, q = 1..n."""
        return self.matrix(x, t)[..., 0, 1:]


def _checked_inverse(frame, block):
    cond = np.linalg.cond(block)
    bad = ~np.isfinite(cond) | (1.0 / cond < frame.rcond_min)
    if np.any(bad):
        worst = float(np.max(np.where(np.isfinite(cond), cond, np.inf)))
        raise SingularFrame(f"{frame.name}: xi block condition number {worst:.3e}")
    return np.linalg.inv(block)


def zeta(frame, x, t):
    """Inverse ``zeta`` of the n x n block, raising SingularFrame when ill-conditioned."""
    return _checked_inverse(frame, frame.block(x, t))


def inverse_matrix(frame, x, t):
    """Inverse of the full (n+1) x (n+1) coefficient matrix."""
    m = frame.matrix(x, t)
    z = _checked_inverse(frame, m[..., 1:, 1:])
    out = np.zeros_like(m)
    out[..., 0, 0] = 1.0
    out[..., 0, 1:] = -np.einsum("...q,...qp->...p", m[..., 0, 1:], z)
    out[..., 1:, 1:] = z
    return out


def full_gradient(G, x, t, grad=None, dG_dt=None, h_fd=_fd.H_FD):
    """Gradient of a scalar field along ``(t, x_1..x_n)``."""
    x = np.asarray(x, dtype=float)
    tb = batch_time(t, x)
    gx = grad(x, tb) if grad is not None else _fd.jacobian(lambda xx: G(xx, tb), x, h_fd)
    gt = dG_dt(x, tb) if dG_dt is not None else _fd.derivative(lambda tt: G(x, tt), tb, h_fd)
    return np.concatenate([np.asarray(gt, dtype=float)[..., None], np.asarray(gx, dtype=float)], axis=-1)


def apply_operator(frame, mu, G, x, t, grad=None, dG_dt=None):
    """``X_mu G``: ``xi_mu^q dG/dx_q``, plus ``dG/dt`` when ``mu == 0``."""
    x = frame._check_x(x)
    if not 0 <= mu <= frame.n:
        raise IndexError(f"operator index {mu} outside 0..{frame.n}")
    g = full_gradient(G, x, t, grad, dG_dt, frame.h_fd)
    return np.einsum("...v,...v->...", frame.matrix(x, t)[..., mu, :], g)


class StructureCoefficients(NamedTuple):
    C0: np.ndarray
    C: np.ndarray
    residual: float


def commutators(frame, x, t):
    """Components of ``(X_mu, X_kappa)`` along ``d/dx_s``; shape (..., n+1, n+1, n)."""
    m = frame.matrix(x, t)
    J = frame.jacobian(x, t)
    # [X_mu, X_k]^s = xi_mu^l d_l xi_k^s - xi_k^l d_l xi_mu^s
    a = np.einsum("...ml,...ksl->...mks", m, J)
    comm = a - np.swapaxes(a, -3, -2)
    return comm[..., 1:]


def structure_coefficients(frame, x, t, check=True):
    """Structure coefficients at ``(x, t)``.

    Supplied coefficients are returned as-is when ``check`` is false.  Otherwise
    the commutator fields are expanded in the frame by solving
    ``C_{pq}^r xi_r^s = [X_p, X_q]^s``; a supplied ``structure`` that differs
    from that solve by more than ``tol_structure`` raises FrameInconsistency.
    """
    if frame.structure is not None and not check:
        C0, C = frame.structure(x, batch_time(t, frame._check_x(x)))
        return StructureCoefficients(np.asarray(C0, float), np.asarray(C, float), 0.0)

    block = frame.block(x, t)
    z = _checked_inverse(frame, block)
    comm = commutators(frame, x, t)
    full = np.einsum("...mks,...sr->...mkr", comm, z)
    recon = np.einsum("...mkr,...rs->...mks", full, block)
    scale = 1.0 + np.max(np.abs(comm), initial=0.0)
    residual = float(np.max(np.abs(recon - comm), initial=0.0) / scale)
    C0 = full[..., 0, 1:, :]
    C = full[..., 1:, 1:, :]

    if frame.structure is not None:
        S0, S = frame.structure(x, batch_time(t, np.asarray(x)))
        err = max(np.max(np.abs(np.asarray(S0) - C0), initial=0.0),
                  np.max(np.abs(np.asarray(S) - C), initial=0.0))
        if err > frame.tol_structure:
            raise FrameInconsistency(
                f"{frame.name}: supplied structure coefficients differ from commutators by {err:.3e}")
        return StructureCoefficients(np.asarray(S0, float), np.asarray(S, float), residual)
    return StructureCoefficients(C0, C, residual)


def eta_from_velocity(frame, x, xdot, t):
    """Poincare parameters from coordinate velocities: ``eta_p xi_p^q = xdot_q - xi_0^q``."""
    m = frame.matrix(x, t)
    rhs = np.asarray(xdot, dtype=float) - m[..., 0, 1:]
    z = _checked_inverse(frame, m[..., 1:, 1:])
    return np.einsum("...q,...qp->...p", rhs, z)


def velocity_from_eta(frame, x, eta, t):
    """Kinematic reconstruction ``xdot_q = xi_0^q + eta_p xi_p^q``."""
    m = frame.matrix(x, t)
    eta = np.asarray(eta, dtype=float)
    if eta.shape[-1] != frame.n:
        raise ValueError(f"expected eta[..., {frame.n}], got shape {eta.shape}")
    return m[..., 0, 1:] + np.einsum("...p,...pq->...q", eta, m[..., 1:, 1:])


def asynchronous_parameters(omega, eta, Omega0):
    """``(Omega_0, Omega_1..Omega_n)`` with ``Omega_p = omega_p + eta_p Omega_0``."""
    omega = np.asarray(omega, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Omega0 = np.asarray(Omega0, dtype=float)
    return np.concatenate([Omega0[..., None], omega + eta * Omega0[..., None]], axis=-1)


def parameters_from_displacement(frame, x, t, dt, dx):
    """Map asynchronous displacements ``(dt, dx)`` to ``Omega_mu = zeta_lambda^mu dx_lambda``."""
    inv = inverse_matrix(frame, x, t)
    d = np.concatenate([np.asarray(dt, dtype=float)[..., None], np.asarray(dx, dtype=float)], axis=-1)
    return np.einsum("...l,...lm->...m", d, inv)


@dataclass(frozen=True)
class VariationProbe:
    """Virtual-displacement parameters ``omega_p(t)`` and time shift ``Omega_0(t)``.

    Derivatives fall back to five-point differences when not supplied.
    """

    omega: Callable
    Omega0: Callable
    omega_dot: Optional[Callable] = None
    Omega0_dot: Optional[Callable] = None

    def d_omega(self, t):
        if self.omega_dot is not None:
            return np.asarray(self.omega_dot(t), dtype=float)
        return _fd.derivative5(self.omega, t, 1e-3)

    def d_Omega0(self, t):
        if self.Omega0_dot is not None:
            return np.asarray(self.Omega0_dot(t), dtype=float)
        return _fd.derivative5(self.Omega0, t, 1e-3)
