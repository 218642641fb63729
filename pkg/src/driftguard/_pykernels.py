"""Pure numpy implementations of the hot loops (fallback for ``_ckernels``)."""
import numpy as np
from scipy.special import ndtr

GAUSSIAN, RECTANGULAR, EPANECHNIKOV = 0, 1, 2

BACKEND = "python"


def _cdf_sf(z, shape):
    if shape == GAUSSIAN:
        return ndtr(z), ndtr(-z)
    if shape == RECTANGULAR:
        cdf = np.clip(z + 0.5, 0.0, 1.0)
        return cdf, 1.0 - cdf
    u = np.clip(z, -1.0, 1.0)
    cdf = 0.5 + 0.75 * u - 0.25 * u**3
    sf = 0.5 - 0.75 * u + 0.25 * u**3
    return cdf, sf


def binned_rows(base, shifts, h, shape, lo_state, n_states):
    """Unnormalized binned KDE rows.

    Row ``i`` holds, for every integer state ``x`` in
    ``[lo_state, lo_state + n_states)``, the kernel mass of the samples
    ``base + shifts[i]`` falling into ``[x - 0.5, x + 0.5]``.
    """
    base = np.ascontiguousarray(base, dtype=float)
    shifts = np.ascontiguousarray(shifts, dtype=float)
    edges = lo_state - 0.5 + np.arange(n_states + 1, dtype=float)
    out = np.empty((shifts.size, n_states))
    for i, shift in enumerate(shifts):
        z = (edges[None, :] - (base[:, None] + shift)) / h
        cdf, sf = _cdf_sf(z, shape)
        lsum = cdf.sum(axis=0)
        usum = sf.sum(axis=0)
        # difference the side whose tail is small to avoid cancellation
        left = lsum[1:] - lsum[:-1]
        right = usum[:-1] - usum[1:]
        out[i] = np.where(lsum[1:] < 0.5 * base.size, left, right)
    np.maximum(out, 0.0, out=out)
    out /= base.size
    return out


def restricted_survival(v1, mats, lo_idx, hi_idx):
    """Propagate ``v1`` through ``mats`` keeping only states ``lo_idx..hi_idx``.

    ``v1`` must already be zero outside the window. Returns the surviving
    mass after the last matrix and the mass absorbed at each matrix step.
    """
    w = np.asarray(v1, dtype=float)[lo_idx : hi_idx + 1]
    exceed = np.zeros(len(mats))
    for t, mat in enumerate(mats):
        full = w @ mat[lo_idx : hi_idx + 1, :]
        exceed[t] = full[:lo_idx].sum() + full[hi_idx + 1 :].sum()
        w = full[lo_idx : hi_idx + 1]
    return float(w.sum()), exceed
