"""Quantization detection, centering, tester-offset correction, interpolation."""
from __future__ import annotations

import enum
import math

import numpy as np

from .data_model import NormalizationMeta, TrajectoryPanel, UnitSpace
from .errors import (
    AllValuesIdentical,
    DriftGuardError,
    NonCommensurable,
    OffLattice,
    OutOfRange,
    ScheduleMismatch,
)

REL_TOL = 1e-9
# a "lattice" with more points than this between min and max is treated as noise
MAX_LATTICE_POINTS = 10**6


class OffsetEstimator(str, enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"

    def __call__(self, values, axis=0):
        if self is OffsetEstimator.MEAN:
            return np.mean(values, axis=axis)
        return np.median(values, axis=axis)


def _real_gcd(a: float, b: float, tol: float) -> float:
    a, b = abs(a), abs(b)
    if a < b:
        a, b = b, a
    while b > tol:
        r = math.fmod(a, b)
        if r > b - tol:
            r = 0.0
        a, b = b, r
    return a


def detect_quantization(values) -> tuple[float, float]:
    """Find the lattice ``origin + n * step`` that the readings live on.

    The step is the greatest common divisor of all pairwise differences,
    computed with a float-tolerant Euclidean algorithm and then refined by
    least squares on the recovered integer indices.

    Returns
    -------
    (step, origin) with ``origin = min(values)``.
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size and not np.all(np.isfinite(arr)):
        raise DriftGuardError("readings must be finite")
    distinct = np.unique(arr)
    if distinct.size < 2:
        raise AllValuesIdentical("fewer than two distinct values; supply the step explicitly")
    tol = REL_TOL * float(np.max(np.abs(distinct)))
    origin = float(distinct[0])
    offsets = distinct - origin
    step = 0.0
    for diff in np.diff(distinct):
        step = float(diff) if step == 0.0 else _real_gcd(step, float(diff), tol)
    if step <= tol or offsets[-1] / step > MAX_LATTICE_POINTS:
        raise NonCommensurable("differences share no common divisor above tolerance")
    idx = np.rint(offsets / step)
    step = float(np.dot(idx, offsets) / np.dot(idx, idx))
    if np.max(np.abs(offsets - idx * step)) > tol:
        raise NonCommensurable("readings do not lie on a common lattice")
    return step, origin


def _lattice_tol(values, step):
    return REL_TOL * max(float(np.max(np.abs(values))) if np.size(values) else 0.0, step)


def center_panel(panel: TrajectoryPanel, step: float, origin: float):
    """Map a raw panel onto the integers via ``(x - origin) / step``."""
    if panel.unit_space is not UnitSpace.RAW:
        raise DriftGuardError("center_panel expects a raw-physical panel")
    meta = NormalizationMeta(step, origin)
    scaled = (panel.values - meta.origin) / meta.step
    rounded = np.rint(scaled)
    err = np.abs(panel.values - (rounded * meta.step + meta.origin))
    tol = _lattice_tol(panel.values, meta.step)
    if np.any(err > tol):
        bad = panel.values.flat[int(np.argmax(err))]
        raise OffLattice(float(bad))
    return panel.replace_values(rounded + 0.0, UnitSpace.NORMALIZED), meta


def backtransform(value, meta: NormalizationMeta):
    """Normalized state (or statistic) back to physical units."""
    out = np.asarray(value, dtype=float) * meta.step + meta.origin
    return float(out) if out.ndim == 0 else out


def backtransform_width(width, meta: NormalizationMeta):
    # widths and drifts carry no origin
    return float(width) * meta.step


def tester_offset_shifts(reference: TrajectoryPanel, estimator=OffsetEstimator.MEDIAN) -> np.ndarray:
    """Per-readout reference drift ``est(col k) - est(col 0)`` in the reference's units."""
    est = OffsetEstimator(estimator)
    centers = est(reference.values, axis=0)
    return centers - centers[0]


def correct_tester_offset(
    stressed: TrajectoryPanel,
    reference: TrajectoryPanel,
    estimator=OffsetEstimator.MEDIAN,
    meta: NormalizationMeta | None = None,
):
    """Subtract the drift observed on unstressed reference devices.

    In normalized space the shifts are snapped to whole lattice steps so the
    corrected panel stays integer-valued. If ``stressed`` is normalized and
    ``reference`` is raw, ``meta`` supplies the step for the conversion.

    Returns the corrected panel and the applied per-readout shifts (in the
    stressed panel's units).
    """
    if stressed.schedule != reference.schedule:
        raise ScheduleMismatch("stressed and reference panels use different readout schedules")
    shifts = tester_offset_shifts(reference, estimator)
    if stressed.unit_space is UnitSpace.NORMALIZED:
        if reference.unit_space is UnitSpace.RAW:
            if meta is None:
                raise DriftGuardError("meta is required to convert raw reference readings")
            shifts = shifts / meta.step
        shifts = np.rint(shifts)
    elif reference.unit_space is not UnitSpace.RAW:
        raise DriftGuardError("cannot correct a raw panel with a normalized reference")
    shifts[0] = 0.0
    shifts = shifts + 0.0
    return stressed.replace_values(stressed.values - shifts[None, :]), shifts


def interpolate_at(panel: TrajectoryPanel, t: float) -> np.ndarray:
    """Per-device linear interpolation of the panel at stress time ``t``.

    Normalized panels are rounded half-to-even so the result stays on the
    integer lattice.
    """
    times = np.asarray(panel.schedule.times)
    if not times[0] <= t <= times[-1]:
        raise OutOfRange(f"t={t} outside [{times[0]}, {times[-1]}]")
    exact = np.flatnonzero(times == t)
    if exact.size:
        return panel.values[:, exact[0]].copy()
    k = int(np.searchsorted(times, t))
    w = (t - times[k - 1]) / (times[k] - times[k - 1])
    col = (1.0 - w) * panel.values[:, k - 1] + w * panel.values[:, k]
    if panel.unit_space is UnitSpace.NORMALIZED:
        col = np.rint(col) + 0.0
    return col


def normalize_panels(stressed: TrajectoryPanel, reference: TrajectoryPanel | None = None,
                     estimator=OffsetEstimator.MEDIAN, step: float | None = None):
    """Raw stressed panel (plus optional reference panel) to a corrected integer panel.

    The lattice is detected on the stressed readings unless ``step`` is
    given. Returns ``(panel, meta)``; ``meta`` records the applied shifts and
    the sub-step residuals in physical units.
    """
    if step is None:
        step, origin = detect_quantization(stressed.values)
    else:
        origin = float(np.min(stressed.values))
    panel, meta = center_panel(stressed, step, origin)
    if reference is None:
        return panel, meta
    panel, shifts = correct_tester_offset(panel, reference, estimator, meta=meta)
    raw = tester_offset_shifts(reference, estimator)
    applied = shifts * meta.step
    meta = NormalizationMeta(meta.step, meta.origin, tuple(applied), tuple(raw - applied))
    return panel, meta


def physical_to_state(value, meta: NormalizationMeta, side: str) -> int:
    """Physical limit to the tightest lattice state that honours it.

    ``side="upper"`` rounds down, ``side="lower"`` rounds up; values within
    the lattice tolerance of a state snap to it.
    """
    x = (float(value) - meta.origin) / meta.step
    near = round(x)
    if abs(x - near) <= REL_TOL * max(abs(x), 1.0):
        return int(near)
    return int(math.floor(x) if side == "upper" else math.ceil(x))
