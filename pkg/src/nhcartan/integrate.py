"""Explicit Runge-Kutta integration with exact-cadence sampling.

``rhs(t, y)`` may take a state of any shape (leading batch axes included); the
whole array advances with one shared step size.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MaxStepsExceeded, NHError, RhsFailure

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``sample_interval=None`` records only the two endpoints.  ``adaptive=False``
    runs the Dormand-Prince pair at the fixed step ``dt`` (used for order
    measurements).
    """

    method: str = "rk45"
    dt: float = 1e-2
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 1_000_000
    sample_interval: Optional[float] = None
    adaptive: bool = True

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.sample_interval is not None and not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.y))

    @property
    def final(self):
        return self.y[-1]


def sample_times(t0, t1, interval):
    if interval is None:
        return np.array([t0, t1], dtype=float)
    k = int(np.floor((t1 - t0) / interval * (1 + 1e-12)))
    ts = t0 + interval * np.arange(k + 1)
    if t1 - ts[-1] > 1e-12 * max(1.0, abs(t1)):
        ts = np.append(ts, t1)
    else:
        ts[-1] = t1
    return ts


class _Counted:
    def __init__(self, rhs):
        self.rhs = rhs
        self.nfev = 0

    def __call__(self, t, y):
        self.nfev += 1
        try:
            out = np.asarray(self.rhs(t, y), dtype=float)
        except RhsFailure:
            raise
        except (NHError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise RhsFailure(t, exc) from exc
        if not np.all(np.isfinite(out)):
            raise RhsFailure(t, FloatingPointError("non-finite derivative"))
        return out


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _dp_step(f, t, y, h, k1):
    k = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * kj for a, kj in zip(_A[i], k) if a != 0.0)
        k.append(f(t + _C[i] * h, yi))
    # stage 7 is evaluated at the 5th-order solution (FSAL)
    y5 = y + h * sum(b * kj for b, kj in zip(_B5, k) if b != 0.0)
    err = h * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
    return y5, err, k[6]


def _initial_step(f, t0, y0, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = f(t0 + h0, y0 + h0 * f0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100.0 * h0, h1, span)


def integrate(rhs, y0, t0, t1, cfg=None):
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1``.

    Samples are recorded at ``t0 + k * sample_interval`` and at ``t1``; each
    sample time is hit exactly by shortening the step that would overshoot it.
    """
    cfg = cfg or IntegratorConfig()
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    f = _Counted(rhs)
    y = np.array(y0, dtype=float, copy=True)
    ts = sample_times(float(t0), float(t1), cfg.sample_interval)
    out = [y.copy()]
    steps = rejected = 0
    t = float(t0)

    if cfg.method == "rk4" or not cfg.adaptive:
        for target in ts[1:]:
            while t < target:
                h = min(cfg.dt, target - t)
                if target - (t + h) < 1e-14 * max(1.0, abs(target)):
                    h = target - t
                if cfg.method == "rk4":
                    y = _rk4_step(f, t, y, h)
                else:
                    y, _, _ = _dp_step(f, t, y, h, f(t, y))
                t = target if h == target - t else t + h
                steps += 1
                if steps > cfg.max_steps:
                    raise MaxStepsExceeded(f"exceeded {cfg.max_steps} steps at t={t:.17g}")
            out.append(y.copy())
        return Trajectory(ts, np.array(out), {"steps": steps, "rejected": 0, "nfev": f.nfev})

    k1 = f(t, y)
    h_nat = _initial_step(f, t, y, k1, cfg.rtol, cfg.atol, float(t1 - t0))
    for target in ts[1:]:
        while t < target:
            remaining = target - t
            last = h_nat >= remaining * (1 - 1e-12)
            h = remaining if last else h_nat
            y_new, err, k7 = _dp_step(f, t, y, h, k1)
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = float(np.max(np.abs(err) / scale)) if err.size else 0.0
            if not np.isfinite(en):
                en = np.inf
            fac = FAC_MAX if en == 0.0 else min(FAC_MAX, max(FAC_MIN, SAFETY * en ** -0.2))
            steps += 1
            if steps > cfg.max_steps:
                raise MaxStepsExceeded(f"exceeded {cfg.max_steps} steps at t={t:.17g}")
            if en <= 1.0:
                t = target if last else t + h
                y, k1 = y_new, k7
                # a shortened landing step does not shrink the natural step
                if not (last and h < h_nat):
                    h_nat = h * fac
            else:
                rejected += 1
                h_nat = h * fac
                if h_nat < 1e-14 * max(1.0, abs(t)):
                    raise RhsFailure(t, FloatingPointError("step size underflow"))
        out.append(y.copy())
    return Trajectory(ts, np.array(out), {"steps": steps, "rejected": rejected, "nfev": f.nfev})
