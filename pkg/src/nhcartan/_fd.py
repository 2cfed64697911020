"""Central finite differences that respect leading batch axes.

All helpers differentiate with respect to the *last* axis of the argument and
append the derivative index as the last axis of the result.
"""

import numpy as np

H_FD = 1e-6


def _steps(v, h_rel):
    return h_rel * (1.0 + np.abs(v))


def _expand(h, ndim):
    # h has the batch shape; pad trailing axes so it broadcasts over outputs
    return h.reshape(h.shape + (1,) * (ndim - h.ndim))


def jacobian(f, v, h_rel=H_FD):
    """d f(v) / d v[..., k] for every k, stacked on a new last axis."""
    v = np.asarray(v, dtype=float)
    h = _steps(v, h_rel)
    cols = []
    for k in range(v.shape[-1]):
        vp = v.copy()
        vm = v.copy()
        vp[..., k] += h[..., k]
        vm[..., k] -= h[..., k]
        hk = vp[..., k] - vm[..., k]
        fp = np.asarray(f(vp), dtype=float)
        fm = np.asarray(f(vm), dtype=float)
        cols.append((fp - fm) / _expand(hk, fp.ndim))
    return np.stack(cols, axis=-1)


def derivative(f, s, h_rel=H_FD):
    """d f(s) / d s for a scalar (or batch-of-scalars) argument ``s``."""
    s = np.asarray(s, dtype=float)
    h = _steps(s, h_rel)
    sp = s + h
    sm = s - h
    hk = sp - sm
    fp = np.asarray(f(sp), dtype=float)
    fm = np.asarray(f(sm), dtype=float)
    return (fp - fm) / _expand(np.asarray(hk), fp.ndim)


def derivative5(f, s, h):
    """Fourth-order five-point derivative with an absolute step ``h``."""
    s = np.asarray(s, dtype=float)
    f2p, f1p = np.asarray(f(s + 2 * h)), np.asarray(f(s + h))
    f1m, f2m = np.asarray(f(s - h)), np.asarray(f(s - 2 * h))
    return (8.0 * (f1p - f1m) - (f2p - f2m)) / (12.0 * h)
