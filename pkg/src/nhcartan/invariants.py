"""Loops in extended reduced phase space, trajectory tubes and loop integrals.

A loop is sampled at ``s_k = k / N`` and carried as three arrays ``t (N,)``,
``x (N, n)`` and ``ystar (N, m)``.  Sliding sample ``k`` along its trajectory
by ``tau_k`` uses the fictitious time ``sigma`` in ``[0, 1]``::

    d(t, x, y*)/dsigma = tau_k * (1, xdot, ydot*)

so one batched integration produces every asynchronous slice at once, and the
slices at intermediate ``sigma`` come from the same run.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import HamiltonRHS, hamiltonian_reduced, legendre_invert
from .errors import NHError, NonSimultaneousSlice, NumericalError
from .frame import inverse_matrix
from .integrate import IntegratorConfig, integrate


@dataclass(frozen=True)
class LoopSpec:
    """Closed curve ``s -> (t, x, y*)``; ``base`` maps an array ``s (N,)`` to
    ``(t (N,), x (N, n), ystar (N, m))`` and must be 1-periodic."""

    base: Callable
    samples: int = 256

    def __post_init__(self):
        if self.samples < 8:
            raise ValueError("a loop needs at least 8 samples")

    def with_samples(self, N):
        return LoopSpec(self.base, int(N))

    def points(self):
        s = np.arange(self.samples) / self.samples
        t, x, y = self.base(s)
        t = np.broadcast_to(np.asarray(t, dtype=float), s.shape).copy()
        return TubeSlice(t, np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.zeros_like(s), 0.0)


def harmonic_loop(t0, x0, y0, x_cos=None, x_sin=None, y_cos=None, y_sin=None, t_cos=0.0, t_sin=0.0,
                  samples=256):
    """Loop whose every coordinate is ``centre + a cos(2 pi s) + b sin(2 pi s)``.

    ``t_cos = t_sin = 0`` gives a synchronous loop.
    """
    x0, y0 = np.atleast_1d(np.asarray(x0, float)), np.atleast_1d(np.asarray(y0, float))
    zx, zy = np.zeros_like(x0), np.zeros_like(y0)
    xc = zx if x_cos is None else np.asarray(x_cos, float)
    xs = zx if x_sin is None else np.asarray(x_sin, float)
    yc = zy if y_cos is None else np.asarray(y_cos, float)
    ys = zy if y_sin is None else np.asarray(y_sin, float)

    def base(s):
        c, sn = np.cos(2 * np.pi * s)[:, None], np.sin(2 * np.pi * s)[:, None]
        t = t0 + t_cos * c[:, 0] + t_sin * sn[:, 0]
        return t, x0 + xc * c + xs * sn, y0 + yc * c + ys * sn

    return LoopSpec(base, samples)


@dataclass
class TubeSlice:
    """Deformed loop: sample ``k`` advanced by ``tau[k] * sigma`` along its trajectory."""

    t: np.ndarray
    x: np.ndarray
    ystar: np.ndarray
    tau: np.ndarray
    sigma: float
    eta: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def N(self):
        return self.t.shape[0]

    def reversed(self):
        idx = (-np.arange(self.N)) % self.N
        return self._take(idx)

    def shifted(self, k):
        return self._take(np.roll(np.arange(self.N), -k))

    def _take(self, idx):
        return TubeSlice(self.t[idx], self.x[idx], self.ystar[idx], self.tau[idx], self.sigma,
                         None if self.eta is None else self.eta[idx])


class TubeFailure(NumericalError):
    """Propagation of one loop sample failed; ``index`` is the sample number."""

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"tube sample {index} failed: {cause}")


class _TubeRHS:
    def __init__(self, model, tau, break_astar):
        self.h = HamiltonRHS(model, break_astar)
        self.tau = tau[:, None]

    def __call__(self, sigma, z):
        d = self.h(z[:, 0], z[:, 1:])
        return self.tau * np.concatenate([np.ones((z.shape[0], 1)), d], axis=-1)


def _threads():
    try:
        return max(1, int(os.environ.get("NH_THREADS", "1")))
    except ValueError:
        return 1


def _integrate_chunk(model, z0, tau, cfg, grid, break_astar):
    sub = IntegratorConfig(cfg.method, cfg.dt, cfg.rtol, cfg.atol, cfg.max_steps, None, cfg.adaptive)
    out = [z0.copy()]
    sigma = 0.0
    z = z0
    rhs = _TubeRHS(model, tau, break_astar)
    for g in grid:
        if g > sigma:
            z = integrate(rhs, z, sigma, g, sub).final
            sigma = g
        out.append(z.copy())
    return np.stack(out[1:])


def _locate(model, z0, tau, cfg, grid, break_astar, base, exc):
    for k in range(z0.shape[0]):
        try:
            _integrate_chunk(model, z0[k:k + 1], tau[k:k + 1], cfg, grid, break_astar)
        except NHError as inner:
            return TubeFailure(base + k, inner)
    return TubeFailure(base, exc)


def tube_slices(loop, model, cfg, tau, fractions=(1.0,), break_astar=False, chunk=None, threads=None):
    """Slices of the tube at ``sigma`` in ``fractions`` (each in ``[0, 1]``).

    ``tau`` is a callable of ``s`` (or an array of per-sample durations).
    Samples are integrated in fixed chunks of ``chunk`` samples (default: all at
    once); chunks may run on ``threads`` workers (default ``NH_THREADS``)
    without changing the result.
    """
    base = loop.points() if isinstance(loop, LoopSpec) else loop
    N = base.N
    s = np.arange(N) / N
    tau_v = np.asarray(tau(s) if callable(tau) else tau, dtype=float)
    tau_v = np.broadcast_to(tau_v, (N,)).copy()
    if np.any(tau_v < 0) or not np.all(np.isfinite(tau_v)):
        raise ValueError("slide durations must be finite and non-negative")
    grid = np.asarray(fractions, dtype=float)
    if np.any(np.diff(grid) < 0) or np.any(grid < 0) or np.any(grid > 1):
        raise ValueError("fractions must be sorted values in [0, 1]")
    z0 = np.concatenate([base.t[:, None], base.x, base.ystar], axis=-1)
    chunk = N if chunk is None else int(chunk)
    starts = list(range(0, N, chunk))

    def run(b):
        sl = slice(b, min(b + chunk, N))
        try:
            return _integrate_chunk(model, z0[sl], tau_v[sl], cfg, grid, break_astar)
        except NHError as exc:
            raise _locate(model, z0[sl], tau_v[sl], cfg, grid, break_astar, b, exc) from exc

    workers = min(threads or _threads(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(b) for b in starts]
    Z = np.concatenate(parts, axis=1)
    n = model.n
    return [TubeSlice(Z[i, :, 0], Z[i, :, 1:1 + n], Z[i, :, 1 + n:], tau_v, float(g)) for i, g in enumerate(grid)]


def propagate_tube(loop, model, cfg, tau, break_astar=False, **kw):
    """The slice reached when every sample has slid by its full ``tau(s)``."""
    return tube_slices(loop, model, cfg, tau, (1.0,), break_astar, **kw)[0]


def slice_reintegration_residual(loop, slc, model, cfg, indices):
    """Max deviation between slice points and single-sample physical-time runs."""
    base = loop.points() if isinstance(loop, LoopSpec) else loop
    worst = 0.0
    for k in indices:
        dt = slc.tau[k] * slc.sigma
        z0 = np.concatenate([base.x[k], base.ystar[k]])
        if dt == 0:
            z = z0
        else:
            z = integrate(HamiltonRHS(model), z0, base.t[k], base.t[k] + dt, cfg).final
        worst = max(worst, float(np.max(np.abs(z - np.concatenate([slc.x[k], slc.ystar[k]])))))
    return worst


# ---- loop integrals ----------------------------------------------------------

def loop_derivative(f, method="fd4"):
    """d f / d s on the periodic grid ``s_k = k/N`` (axis 0)."""
    f = np.asarray(f, dtype=float)
    N = f.shape[0]
    if method == "fft":
        k = np.fft.fftfreq(N, d=1.0 / N)
        if N % 2 == 0:
            k[N // 2] = 0.0
        shape = (N,) + (1,) * (f.ndim - 1)
        return np.real(np.fft.ifft(2j * np.pi * k.reshape(shape) * np.fft.fft(f, axis=0), axis=0))
    if method != "fd4":
        raise ValueError(f"unknown loop derivative {method!r}")
    d1 = np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)
    d2 = np.roll(f, -2, axis=0) - np.roll(f, 2, axis=0)
    return (8.0 * d1 - d2) * (N / 12.0)


def _slice_eta(slc, model):
    if slc.eta is None:
        slc.eta = legendre_invert(model, slc.x, slc.ystar, slc.t)
    return slc.eta


def loop_parameters(slc, model, method="fd4"):
    """``Omega_mu`` per sample from the loop tangents ``(dt/ds, dx/ds)``."""
    dt = loop_derivative(slc.t, method)
    dx = loop_derivative(slc.x, method)
    d = np.concatenate([dt[:, None], dx], axis=-1)
    return np.einsum("kl,klm->km", d, inverse_matrix(model.frame, slc.x, slc.t))


def cartan_integrand(slc, model, method="fd4"):
    """``y*_j Omega_j - H* Omega_0`` at every sample."""
    Om = loop_parameters(slc, model, method)
    m = model.m
    H = hamiltonian_reduced(model, slc.x, slc.ystar, slc.t, eta_i=_slice_eta(slc, model))
    return np.sum(slc.ystar * Om[:, 1:1 + m], axis=-1) - H * Om[:, 0]


def linear_integrand(slc, model, method="fd4", tol_sync=1e-12):
    """``y*_j omega_j`` at every sample of a simultaneous loop."""
    spread = float(np.max(slc.t) - np.min(slc.t))
    if spread > tol_sync * max(1.0, float(np.max(np.abs(slc.t)))):
        raise NonSimultaneousSlice(f"loop times spread over {spread:.3e}")
    Om = loop_parameters(slc, model, method)
    return np.sum(slc.ystar * Om[:, 1:1 + model.m], axis=-1)


def poincare_cartan_integral(slc, model, method="fd4"):
    """``I = loop integral of (y*_j Omega_j - H* Omega_0)``, periodic trapezoid in ``s``."""
    return math.fsum(cartan_integrand(slc, model, method)) / slc.N


def poincare_linear_integral(slc, model, method="fd4", tol_sync=1e-12):
    """``I_1 = loop integral of y*_j omega_j`` on a loop at one common time."""
    return math.fsum(linear_integrand(slc, model, method, tol_sync)) / slc.N


def _rel(value, ref):
    return abs(value - ref) / (abs(ref) if abs(ref) > 1e-12 else 1.0)


def max_drift(loop, model, cfg, tau, fractions, break_astar=False, linear=False, method="fd4"):
    """Largest relative change of ``I`` (or ``I_1``) over the tube slices."""
    slices = tube_slices(loop, model, cfg, tau, fractions, break_astar)
    f = poincare_linear_integral if linear else poincare_cartan_integral
    ref = f(loop.points() if isinstance(loop, LoopSpec) else loop, model, method)
    vals = [f(s, model, method) for s in slices]
    return max(_rel(v, ref) for v in vals), ref, vals


def drift_report(loop, model, cfg, taus, slide_grid, Ns=None, rtols=None, break_astar=False, method="fd4"):
    """Values of ``I`` (and ``I_1`` on simultaneous slices) along every tube.

    ``taus`` maps labels to slide functions; ``slide_grid`` holds the fractions
    ``sigma``.  Optional convergence tables give the worst drift for each
    sample count in ``Ns`` and each ``rtol`` in ``rtols``.  Failures are
    recorded, not raised.
    """
    base = loop.points()
    rows = []
    errors = []
    I0 = poincare_cartan_integral(base, model, method)
    try:
        I1_0 = poincare_linear_integral(base, model, method)
    except NonSimultaneousSlice:
        I1_0 = None
    for label, tau in taus.items():
        try:
            slices = tube_slices(base, model, cfg, tau, slide_grid, break_astar)
        except NHError as exc:
            errors.append({"tau": label, "error": f"{type(exc).__name__}: {exc}"})
            continue
        for i, slc in enumerate(slices):
            I = poincare_cartan_integral(slc, model, method)
            try:
                I1 = poincare_linear_integral(slc, model, method)
            except NonSimultaneousSlice:
                I1 = None
            rows.append({
                "slide": i, "tau": label, "sigma": slc.sigma, "I": I, "I1": I1,
                "drift": _rel(I, I0),
                "drift_I1": None if I1 is None or I1_0 is None else _rel(I1, I1_0),
            })
    drifts = [r["drift"] for r in rows]
    report = {
        "I0": I0, "I1_0": I1_0, "rows": rows, "errors": errors,
        "max_drift": max(drifts) if drifts else float("nan"),
    }

    def worst(lp, c):
        out = 0.0
        for tau in taus.values():
            out = max(out, max_drift(lp, model, c, tau, slide_grid, break_astar, method=method)[0])
        return out

    if Ns:
        report["convergence_N"] = [{"N": int(N), "max_drift": _safe(worst, loop.with_samples(N), cfg)}
                                   for N in Ns]
    if rtols:
        report["convergence_rtol"] = [
            {"rtol": float(r), "max_drift": _safe(worst, loop, _with_rtol(cfg, r))} for r in rtols]
    return report


def _with_rtol(cfg, rtol):
    return IntegratorConfig(cfg.method, cfg.dt, rtol, min(cfg.atol, rtol * 1e-2), cfg.max_steps,
                            cfg.sample_interval, cfg.adaptive)


def _safe(fn, *args):
    try:
        return fn(*args)
    except NHError:
        return float("nan")
