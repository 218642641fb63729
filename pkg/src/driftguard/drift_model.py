"""Semi-parametric Markov model of total drift.

Each readout step ``k`` is described by a linear dependence of the total
drift on its previous value,

    D_sum[k] = beta0 + beta1 * D_sum[k-1] + eps,

whose error shape is taken from the pooled per-step increments (or the
regression residuals). The pooled samples are moved and scaled onto the
conditional mean/variance of each starting state, smoothed with a kernel
density estimate and integrated over unit bins centred on the integers.
Stacking these rows gives one row-stochastic transition matrix per step.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import kernels
from .data_model import ReadoutSchedule, StateSpace, TrajectoryPanel, UnitSpace, frozen_array
from .errors import (
    DegenerateScale,
    DimensionMismatch,
    DriftGuardError,
    StateSpaceTooLarge,
    TailMassTooLarge,
)

log = logging.getLogger(__name__)

TAIL_TOL = 1e-12
BANDWIDTH_FLOOR = 0.25
MAX_STATES = 20001
# variances below this are treated as exactly zero
VAR_EPS = 1e-12


class PoolingMode(str, enum.Enum):
    INCREMENTS = "increments"
    RESIDUALS = "residuals"


class KernelShape(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RECTANGULAR = "rectangular"
    EPANECHNIKOV = "epanechnikov"

    @property
    def code(self) -> int:
        return {
            KernelShape.GAUSSIAN: kernels.GAUSSIAN,
            KernelShape.RECTANGULAR: kernels.RECTANGULAR,
            KernelShape.EPANECHNIKOV: kernels.EPANECHNIKOV,
        }[self]


def silverman_bandwidth(samples, floor=BANDWIDTH_FLOOR) -> float:
    """``0.9 * min(sd, IQR/1.34) * n**(-1/5)``, floored at a quarter lattice step.

    A zero IQR falls back to the standard deviation alone.
    """
    x = np.asarray(samples, dtype=float)
    sd = float(np.std(x))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return max(0.9 * spread * x.size ** (-0.2), floor)


@dataclass(frozen=True)
class KernelSpec:
    shape: KernelShape = KernelShape.GAUSSIAN
    bandwidth: float | str = "silverman"

    def __post_init__(self):
        object.__setattr__(self, "shape", KernelShape(self.shape))
        bw = self.bandwidth
        if isinstance(bw, str):
            try:
                bw = float(bw)
            except ValueError:
                if bw.lower() != "silverman":
                    raise DriftGuardError(f"unknown bandwidth rule {bw!r}") from None
                bw = "silverman"
        else:
            bw = float(bw)
        if not isinstance(bw, str) and not (bw > 0 and math.isfinite(bw)):
            raise DriftGuardError(f"bandwidth must be positive, got {bw}")
        object.__setattr__(self, "bandwidth", bw)

    @property
    def is_rule(self) -> bool:
        return isinstance(self.bandwidth, str)

    def resolve(self, samples) -> float:
        return silverman_bandwidth(samples) if self.is_rule else float(self.bandwidth)

    def reach(self, h: float, tail_tol: float = TAIL_TOL) -> float:
        """Distance beyond the outermost sample past which the kernel mass is negligible."""
        if self.shape is KernelShape.GAUSSIAN:
            return h * float(-ndtri(tail_tol / 10))
        if self.shape is KernelShape.RECTANGULAR:
            return 0.5 * h
        return h

    def to_dict(self):
        return {"shape": self.shape.value, "bandwidth": self.bandwidth}

    @classmethod
    def from_dict(cls, data):
        return cls(data["shape"], data["bandwidth"])


@dataclass(frozen=True, eq=False)
class DriftSeries:
    """``d x k`` matrix of total drifts; column ``k-1`` is the drift up to readout ``k``."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", frozen_array(self.values))

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1, prepend=0.0)


@dataclass(frozen=True, eq=False)
class StepFit:
    """Linear dependence of one step plus the pooled samples shaping its error."""

    beta0: float
    beta1: float
    sigma2_eps: float
    pooled_samples: np.ndarray = field(repr=False)
    pooling_mode: PoolingMode
    mean_prev: float
    mean_cur: float
    mean_inc: float
    var_inc: float

    def __post_init__(self):
        object.__setattr__(self, "pooling_mode", PoolingMode(self.pooling_mode))
        object.__setattr__(self, "pooled_samples", frozen_array(self.pooled_samples))
        for name in ("beta0", "beta1", "sigma2_eps", "mean_prev", "mean_cur", "mean_inc", "var_inc"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def __eq__(self, other):
        if not isinstance(other, StepFit):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self):
        return {
            "beta0": self.beta0,
            "beta1": self.beta1,
            "sigma2_eps": self.sigma2_eps,
            "pooling_mode": self.pooling_mode.value,
            "mean_prev": self.mean_prev,
            "mean_cur": self.mean_cur,
            "mean_inc": self.mean_inc,
            "var_inc": self.var_inc,
            "pooled_samples": self.pooled_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["beta0"],
            data["beta1"],
            data["sigma2_eps"],
            np.array(data["pooled_samples"], dtype=float),
            data["pooling_mode"],
            data["mean_prev"],
            data["mean_cur"],
            data["mean_inc"],
            data["var_inc"],
        )


def _check_pmf(vec, what, tol=1e-12):
    if np.any(vec < 0) or abs(vec.sum() - 1.0) > tol:
        raise DriftGuardError(f"{what} is not a probability vector (sum {vec.sum()!r})")


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row ``i`` is the pmf of the next total drift given current drift ``states.lo + i``."""

    states: StateSpace
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.shape != (self.states.size, self.states.size):
            raise DimensionMismatch(
                f"matrix shape {rows.shape} does not match {self.states.size} states"
            )
        if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-12):
            raise DriftGuardError("transition matrix rows must be probability vectors")
        object.__setattr__(self, "rows", frozen_array(rows))

    def __eq__(self, other):
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return self.states == other.states and np.array_equal(self.rows, other.rows)


@dataclass(frozen=True, eq=False)
class DriftChain:
    """Fitted chain: first-step pmf plus one matrix for each later step."""

    schedule: ReadoutSchedule
    states: StateSpace
    first_step_pmf: np.ndarray = field(repr=False)
    matrices: tuple[TransitionMatrix, ...] = ()
    fits: tuple[StepFit, ...] = ()
    kernel: KernelSpec = field(default_factory=KernelSpec)
    bandwidths: tuple[float, ...] = ()

    def __post_init__(self):
        first = np.asarray(self.first_step_pmf, dtype=float)
        if first.shape != (self.states.size,):
            raise DimensionMismatch("first-step pmf does not match the state space")
        _check_pmf(first, "first-step pmf")
        mats = tuple(self.matrices)
        if any(m.states != self.states for m in mats):
            raise DimensionMismatch("all transition matrices must share the chain's state space")
        if len(mats) != self.schedule.steps - 1:
            raise DimensionMismatch(
                f"{self.schedule.steps} steps need {self.schedule.steps - 1} matrices, got {len(mats)}"
            )
        object.__setattr__(self, "first_step_pmf", frozen_array(first))
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "fits", tuple(self.fits))
        object.__setattr__(self, "bandwidths", tuple(float(b) for b in self.bandwidths))
        stack = np.stack([m.rows for m in mats]) if mats else np.zeros((0,) + (self.states.size,) * 2)
        stack.flags.writeable = False
        object.__setattr__(self, "_stack", stack)

    @classmethod
    def from_arrays(cls, lo, first_step_pmf, matrices, times=None, **kwargs) -> "DriftChain":
        """Assemble a chain directly from arrays (states start at ``lo``)."""
        first = np.asarray(first_step_pmf, dtype=float)
        states = StateSpace(lo, lo + first.size - 1)
        mats = tuple(TransitionMatrix(states, m) for m in matrices)
        if times is None:
            times = tuple(float(t) for t in range(len(mats) + 2))
        return cls(ReadoutSchedule(times), states, first, mats, **kwargs)

    @property
    def steps(self) -> int:
        return self.schedule.steps

    @property
    def matrix_stack(self) -> np.ndarray:
        """``(steps - 1, alpha, alpha)`` array of all transition matrices."""
        return self._stack

    def __eq__(self, other):
        if not isinstance(other, DriftChain):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self):
        return {
            "schedule": self.schedule.to_dict(),
            "states": self.states.to_dict(),
            "first_step_pmf": self.first_step_pmf.tolist(),
            "matrices": [m.rows.tolist() for m in self.matrices],
            "fits": [f.to_dict() for f in self.fits],
            "kernel": self.kernel.to_dict(),
            "bandwidths": list(self.bandwidths),
        }

    @classmethod
    def from_dict(cls, data):
        states = StateSpace.from_dict(data["states"])
        return cls(
            ReadoutSchedule.from_dict(data["schedule"]),
            states,
            np.array(data["first_step_pmf"], dtype=float),
            tuple(TransitionMatrix(states, np.array(m, dtype=float)) for m in data["matrices"]),
            tuple(StepFit.from_dict(f) for f in data.get("fits", ())),
            KernelSpec.from_dict(data.get("kernel", {"shape": "gaussian", "bandwidth": "silverman"})),
            tuple(data.get("bandwidths", ())),
        )


# --------------------------------------------------------------------------
# estimation


def compute_total_drifts(panel: TrajectoryPanel) -> DriftSeries:
    if panel.unit_space is not UnitSpace.NORMALIZED:
        raise DriftGuardError("drift model needs an integer-normalized panel")
    return DriftSeries(panel.values[:, 1:] - panel.values[:, :1])


def fit_step_regression(prev, cur, pooling_mode=PoolingMode.INCREMENTS) -> StepFit:
    """Ordinary least squares of ``cur`` on ``prev`` with population variances."""
    prev = np.asarray(prev, dtype=float)
    cur = np.asarray(cur, dtype=float)
    if prev.shape != cur.shape or prev.ndim != 1 or prev.size < 2:
        raise DimensionMismatch("regression needs two equal-length columns of at least 2 values")
    mode = PoolingMode(pooling_mode)
    mean_prev, mean_cur = prev.mean(), cur.mean()
    var_prev = float(np.mean((prev - mean_prev) ** 2))
    if var_prev <= VAR_EPS:
        beta1 = 0.0
    else:
        beta1 = float(np.mean((prev - mean_prev) * (cur - mean_cur)) / var_prev)
    beta0 = float(mean_cur - beta1 * mean_prev)
    resid = cur - beta0 - beta1 * prev
    sigma2 = float(np.mean(resid**2))
    inc = cur - prev
    mean_inc = float(inc.mean())
    var_inc = float(np.mean((inc - mean_inc) ** 2))
    if sigma2 <= VAR_EPS:
        sigma2 = 0.0
        resid = np.zeros_like(resid)
    if var_inc <= VAR_EPS:
        var_inc = 0.0
    pooled = inc if mode is PoolingMode.INCREMENTS else resid
    return StepFit(beta0, beta1, sigma2, pooled, mode, mean_prev, mean_cur, mean_inc, var_inc)


def conditional_moments(j, fit: StepFit) -> tuple[float, float]:
    """Mean and variance of the next total drift given current drift ``j``."""
    return fit.beta1 * (j - fit.mean_prev) + fit.mean_cur, fit.sigma2_eps


def _error_shape(fit: StepFit) -> np.ndarray:
    """Pooled samples mapped to zero mean and variance ``sigma2_eps``."""
    u = fit.pooled_samples
    if fit.pooling_mode is PoolingMode.RESIDUALS:
        return np.asarray(u, dtype=float)
    if fit.var_inc == 0.0:
        if fit.sigma2_eps > 0.0:
            raise DegenerateScale("pooled increments have zero variance but sigma2_eps > 0")
        return np.zeros(u.size)
    return (u - fit.mean_inc) * math.sqrt(fit.sigma2_eps / fit.var_inc)


def transform_pooled_samples(fit: StepFit, j) -> np.ndarray:
    """Pooled samples moved onto the conditional mean/variance of starting state ``j``."""
    mean, _ = conditional_moments(j, fit)
    return _error_shape(fit) + mean


class KernelDensity:
    """Kernel density estimate ``(1/nh) sum K((x - x_i)/h)``.

    The rectangular kernel has width ``h``; the Epanechnikov kernel has
    support ``[-h, h]``; the Gaussian kernel has standard deviation ``h``.
    """

    def __init__(self, samples, bandwidth: float, shape=KernelShape.GAUSSIAN):
        self.samples = np.asarray(samples, dtype=float).ravel()
        if self.samples.size == 0:
            raise DriftGuardError("density estimation needs at least one sample")
        if not bandwidth > 0:
            raise DriftGuardError("bandwidth must be positive")
        self.h = float(bandwidth)
        self.shape = KernelShape(shape)

    def _z(self, x):
        x = np.asarray(x, dtype=float)
        return (x[..., None] - self.samples) / self.h

    def pdf(self, x):
        z = self._z(x)
        if self.shape is KernelShape.GAUSSIAN:
            k = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
        elif self.shape is KernelShape.RECTANGULAR:
            k = (np.abs(z) <= 0.5).astype(float)
        else:
            k = np.where(np.abs(z) <= 1, 0.75 * (1 - z**2), 0.0)
        return k.mean(axis=-1) / self.h

    def cdf(self, x):
        z = self._z(x)
        if self.shape is KernelShape.GAUSSIAN:
            c = ndtr(z)
        elif self.shape is KernelShape.RECTANGULAR:
            c = np.clip(z + 0.5, 0.0, 1.0)
        else:
            u = np.clip(z, -1.0, 1.0)
            c = 0.5 + 0.75 * u - 0.25 * u**3
        return c.mean(axis=-1)


def estimate_step_density(samples, kernel: KernelSpec | None = None) -> KernelDensity:
    kernel = kernel or KernelSpec()
    samples = np.asarray(samples, dtype=float)
    return KernelDensity(samples, kernel.resolve(samples), kernel.shape)


def bin_density(density: KernelDensity, states: StateSpace, tail_tol=TAIL_TOL) -> np.ndarray:
    """Integrate the density over ``[x - 0.5, x + 0.5]`` for every state ``x``."""
    row = kernels.binned_rows(
        density.samples, np.zeros(1), density.h, density.shape.code, states.lo, states.size
    )[0]
    leak = 1.0 - row.sum()
    if leak >= tail_tol:
        raise TailMassTooLarge(
            f"{leak:.3g} of the density lies outside [{states.lo}, {states.hi}]"
        )
    return row / row.sum()


def _point_mass_rows(centers, states: StateSpace) -> np.ndarray:
    """Zero-bandwidth limit of binning: all mass in the bin holding each center.

    A center exactly on a bin edge is split evenly between the two bins.
    """
    out = np.zeros((len(centers), states.size))
    for i, c in enumerate(centers):
        x = math.floor(c + 0.5)
        targets = ((x - 1, 0.5), (x, 0.5)) if c + 0.5 == x else ((x, 1.0),)
        for state, p in targets:
            if state in states:
                out[i, state - states.lo] += p
    return out


def _row_densities(fit: StepFit, kernel: KernelSpec, centers, states: StateSpace):
    """Unnormalized binned rows for the given conditional means, plus the bandwidth used."""
    shape = _error_shape(fit)
    if fit.sigma2_eps == 0.0 and kernel.is_rule:
        return _point_mass_rows(centers, states), 0.0
    h = kernel.resolve(shape)
    rows = kernels.binned_rows(shape, np.asarray(centers, dtype=float), h, kernel.shape.code,
                               states.lo, states.size)
    return rows, h


def _normalize_rows(rows, states: StateSpace):
    sums = rows.sum(axis=1)
    empty = sums <= 0.0
    if np.any(empty):
        # rows whose whole mass falls outside the state space are unreachable;
        # they only need to be valid, so their mass goes to the nearest edge
        log.debug("%d transition rows fully outside the state space", int(empty.sum()))
        nearest = np.where(np.arange(states.size) < states.size / 2, 0, states.size - 1)
        rows[np.flatnonzero(empty), nearest[empty]] = 1.0
        sums = rows.sum(axis=1)
    return rows / sums[:, None]


def build_transition_matrix(fit: StepFit, kernel: KernelSpec | None, states: StateSpace) -> TransitionMatrix:
    kernel = kernel or KernelSpec()
    centers = [conditional_moments(j, fit)[0] for j in states.states]
    rows, _ = _row_densities(fit, kernel, centers, states)
    return TransitionMatrix(states, _normalize_rows(rows, states))


def build_first_step(fit: StepFit, kernel: KernelSpec | None, states: StateSpace, tail_tol=TAIL_TOL) -> np.ndarray:
    """pmf of the first total drift from the raw first increments (no dependence correction)."""
    kernel = kernel or KernelSpec()
    u = np.asarray(fit.pooled_samples, dtype=float)
    if fit.pooling_mode is PoolingMode.RESIDUALS:
        u = u + fit.mean_cur
    if np.ptp(u) == 0 and kernel.is_rule:
        row = _point_mass_rows([u[0]], states)[0]
    else:
        h = kernel.resolve(u)
        row = kernels.binned_rows(u, np.zeros(1), h, kernel.shape.code, states.lo, states.size)[0]
    leak = 1.0 - row.sum()
    if leak >= tail_tol:
        raise TailMassTooLarge(f"first-step density leaks {leak:.3g} outside the state space")
    return row / row.sum()


def _step_bandwidth(fit: StepFit, kernel: KernelSpec, first: bool) -> float:
    if first:
        u = fit.pooled_samples
        return 0.0 if (np.ptp(u) == 0 and kernel.is_rule) else kernel.resolve(u)
    if fit.sigma2_eps == 0.0 and kernel.is_rule:
        return 0.0
    return kernel.resolve(_error_shape(fit))


def widen_state_space(fits, kernel: KernelSpec | None = None, tail_tol=TAIL_TOL, max_states=MAX_STATES) -> StateSpace:
    """Smallest interval around 0 holding every state reachable from zero drift.

    Reachability is tracked step by step: the support of step ``k`` is the
    range of conditional means over the previous reachable interval, widened
    by the spread of the error shape and the kernel's negligible-tail reach.
    """
    if not fits:
        raise DriftGuardError("at least one step fit is required")
    kernel = kernel or KernelSpec()
    lo = hi = 0
    reach_lo, reach_hi = 0, 0
    for k, fit in enumerate(fits):
        h = _step_bandwidth(fit, kernel, first=k == 0)
        pad = kernel.reach(h, tail_tol) if h > 0 else 0.0
        if k == 0:
            u = np.asarray(fit.pooled_samples, dtype=float)
            if fit.pooling_mode is PoolingMode.RESIDUALS:
                u = u + fit.mean_cur
            a, b = u.min() - pad, u.max() + pad
        else:
            shape = _error_shape(fit)
            ends = [conditional_moments(j, fit)[0] for j in (reach_lo, reach_hi)]
            a = min(ends) + shape.min() - pad
            b = max(ends) + shape.max() + pad
        reach_lo, reach_hi = math.floor(a), math.ceil(b)
        lo, hi = min(lo, reach_lo), max(hi, reach_hi)
        if hi - lo + 1 > max_states:
            raise StateSpaceTooLarge(
                f"drift support grows beyond {max_states} states by step {k + 1}"
            )
    return StateSpace(min(lo, -1), max(hi, 1))


def fit_chain(panel: TrajectoryPanel, kernel: KernelSpec | None = None,
              pooling_mode=PoolingMode.INCREMENTS, tail_tol=TAIL_TOL,
              max_states=MAX_STATES) -> DriftChain:
    """Fit one transition step per readout interval of a normalized panel."""
    kernel = kernel or KernelSpec()
    drifts = compute_total_drifts(panel).values
    prev = np.zeros(drifts.shape[0])
    fits = []
    for k in range(drifts.shape[1]):
        fits.append(fit_step_regression(prev, drifts[:, k], pooling_mode))
        prev = drifts[:, k]
    states = widen_state_space(fits, kernel, tail_tol, max_states)
    first = build_first_step(fits[0], kernel, states, tail_tol)
    matrices = tuple(build_transition_matrix(f, kernel, states) for f in fits[1:])
    bandwidths = tuple(_step_bandwidth(f, kernel, first=k == 0) for k, f in enumerate(fits))
    log.info("fitted %d-step chain on %d states", len(fits), states.size)
    return DriftChain(panel.schedule, states, first, matrices, tuple(fits), kernel, bandwidths)


# --------------------------------------------------------------------------
# propagation


def convolve_start(chain: DriftChain, start) -> tuple[np.ndarray, float]:
    """Drift pmf after the first step for a start-drift pmf ``start``.

    Returns the vector over ``chain.states`` and the mass that left the
    state space.
    """
    start = np.asarray(start, dtype=float)
    if start.shape != (chain.states.size,):
        raise DimensionMismatch(
            f"start vector has shape {start.shape}, chain has {chain.states.size} states"
        )
    nz = np.flatnonzero(start)
    zero_idx = -chain.states.lo
    if nz.size == 1 and nz[0] == zero_idx:
        v = start[zero_idx] * chain.first_step_pmf
        return v, 0.0
    full = np.convolve(start, chain.first_step_pmf)
    # full[m] is drift 2*lo + m; keep the slice for lo..hi
    v = full[zero_idx : zero_idx + chain.states.size].copy()
    leaked = float(full[:zero_idx].sum() + full[zero_idx + chain.states.size :].sum())
    return v, leaked


def propagate(chain: DriftChain, initial=None) -> list[np.ndarray]:
    """Per-readout pmfs of total drift for readouts ``1..k``."""
    initial = chain.states.unit() if initial is None else np.asarray(initial, dtype=float)
    if initial.shape != (chain.states.size,):
        raise DimensionMismatch("initial vector does not match the chain's state space")
    _check_pmf(initial, "initial vector", 1e-10)
    v, leaked = convolve_start(chain, initial)
    if leaked > 1e-10:
        raise DriftGuardError(f"initial drift pushes {leaked:.3g} mass outside the state space")
    out = [v]
    for mat in chain.matrices:
        v = v @ mat.rows
        out.append(v)
    return out
