"""Numerical check of the transpositional relations and the varied-functional lemma.

A one-parameter family of curves ``x(t, eps) = x(t) + eps * omega_p(t) X_p x``
is built around a reference curve, its Poincare parameters are recomputed from
the varied velocities, and the first-order difference quotients are compared
against the closed-form right-hand sides.  Each residual is evaluated at
``eps`` and ``eps/2`` so the caller can confirm first-order convergence.
"""

from dataclasses import dataclass

import numpy as np

from . import _fd
from .frame import eta_from_velocity, full_gradient, structure_coefficients


def _default_functional(eta, x, t):
    return 0.5 * np.sum(eta**2, axis=-1) + np.sin(x[..., 0]) * eta[..., 0] + 0.1 * t * x[..., -1]


@dataclass
class TranspositionReport:
    eps: float
    synchronous: tuple
    asynchronous: tuple
    functional: tuple
    delta_J: float = float("nan")

    @staticmethod
    def _ratio(pair):
        a, b = pair
        return a / b if b > 0 else float("nan")

    @property
    def ratios(self):
        return {
            "synchronous": self._ratio(self.synchronous),
            "asynchronous": self._ratio(self.asynchronous),
            "functional": self._ratio(self.functional),
        }

    @property
    def max_residual(self):
        return max(self.synchronous[0], self.asynchronous[0], self.functional[0])


class _Curve:
    def __init__(self, frame, x_of_t, xdot_of_t, probe):
        self.frame = frame
        self.x = x_of_t
        self.probe = probe
        self._xdot = xdot_of_t

    def xdot(self, t):
        if self._xdot is not None:
            return np.asarray(self._xdot(t), dtype=float)
        return _fd.derivative5(self.x, t, 1e-4)

    def shift(self, t):
        """``v_q = omega_p xi_p^q`` and its total time derivative."""
        x, xd = self.x(t), self.xdot(t)
        om, omd = self.probe.omega(t), self.probe.d_omega(t)
        B = self.frame.block(x, t)
        J = self.frame.jacobian(x, t)[..., 1:, 1:, :]
        Bdot = J[..., 0] + np.einsum("...pqs,...s->...pq", J[..., 1:], xd)
        v = np.einsum("...p,...pq->...q", om, B)
        vd = np.einsum("...p,...pq->...q", omd, B) + np.einsum("...p,...pq->...q", om, Bdot)
        return v, vd

    def varied_eta(self, t, eps):
        x, xd = self.x(t), self.xdot(t)
        v, vd = self.shift(t)
        xs = x + eps * v
        return eta_from_velocity(self.frame, xs, xd + eps * vd, t), xs

    def eta(self, t):
        return eta_from_velocity(self.frame, self.x(t), self.xdot(t), t)


def verify_transposition(frame, x_of_t, probe, t1, t2, epsilon=1e-3, f=None,
                         xdot_of_t=None, nodes=24):
    """Residuals of the synchronous/asynchronous transposition rules and of the
    varied-functional identity along ``x_of_t`` on ``[t1, t2]``.

    ``x_of_t`` maps an array of times ``(K,)`` to positions ``(K, n)``.  ``f`` is
    the integrand ``f(eta, x, t)`` of the test functional (a smooth default is
    used when omitted).  ``delta_J`` in the report is the closed-form first
    variation of the functional.  Report-only: nothing is raised on large
    residuals.
    """
    f = _default_functional if f is None else f
    curve = _Curve(frame, x_of_t, xdot_of_t, probe)
    s, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t2 - t1) * s + 0.5 * (t1 + t2)
    w = 0.5 * (t2 - t1) * w

    x = curve.x(t)
    eta = curve.eta(t)
    eta_dot = _fd.derivative5(curve.eta, t, 1e-3)
    om, omd = probe.omega(t), probe.d_omega(t)
    Om0 = np.asarray(probe.Omega0(t), dtype=float)
    Om0d = np.asarray(probe.d_Omega0(t), dtype=float)
    sc = structure_coefficients(frame, x, t, check=False)
    C0, C = sc.C0, sc.C

    sync_rhs = (omd + np.einsum("...qp,...q->...p", C0, om)
                + np.einsum("...qrp,...q,...r->...p", C, eta, om))

    Om = om + eta * Om0[:, None]
    Omd = omd + eta_dot * Om0[:, None] + eta * Om0d[:, None]
    async_rhs = (Omd - eta * Om0d[:, None]
                 + np.einsum("...qrp,...q,...r->...p", C, eta, Om)
                 + np.einsum("...qp,...q->...p", C0, Om))

    # first variation of the functional: f_eta . Delta eta + Omega_mu X_mu f
    f_eta = _fd.jacobian(lambda e: f(e, x, t), eta)
    g = full_gradient(lambda xx, tt: f(eta, xx, tt), x, t)
    Om_full = np.concatenate([Om0[:, None], Om], axis=-1)
    Xf = np.einsum("...m,...mv,...v->...", Om_full, frame.matrix(x, t), g)
    f0 = f(eta, x, t)
    dJ_rhs = float(np.sum(w * (np.sum(f_eta * async_rhs, axis=-1) + Xf + f0 * Om0d)))
    J0 = float(np.sum(w * f0))

    def residuals(eps):
        eta_s, _ = curve.varied_eta(t, eps)
        r_sync = np.max(np.abs((eta_s - eta) / eps - sync_rhs))
        ts = t + eps * Om0
        eta_a, xa = curve.varied_eta(ts, eps)
        r_async = np.max(np.abs((eta_a - eta) / eps - async_rhs))
        Je = float(np.sum(w * f(eta_a, xa, ts) * (1.0 + eps * Om0d)))
        r_fun = abs((Je - J0) / eps - dJ_rhs)
        return float(r_sync), float(r_async), float(r_fun)

    a = residuals(epsilon)
    b = residuals(0.5 * epsilon)
    return TranspositionReport(epsilon, (a[0], b[0]), (a[1], b[1]), (a[2], b[2]), dJ_rhs)
