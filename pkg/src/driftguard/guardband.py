"""Lifetime survival probabilities and yield-optimal test limits.

Survival is evaluated by pushing a start vector through the first-step pmf
and the transition matrices while zeroing every state outside the allowed
window. Mass that leaves the window is absorbed and booked as the
exceedance of the readout where it left, so the per-readout exceedances are
first-passage probabilities.

Single-device limits use the worst-case part, which sits exactly on the test
limit: with ``UTL = USL - gbu`` the total drift must stay at or below ``gbu``.
Batch limits condition on a known initial pmf truncated to the test limits.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data_model import LatticePmf, NormalizationMeta, decode_limit, encode_limit
from .drift_model import DriftChain, TransitionMatrix, convolve_start
from .errors import DimensionMismatch, DriftGuardError, EmptyInterval, EmptyTruncation
from .preprocess import backtransform, backtransform_width


class Sidedness(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"
    TWO_SIDED = "two-sided"


@dataclass(frozen=True)
class QualityTarget:
    """Largest tolerated lifetime exceedance probability per device."""

    fail_budget: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.fail_budget < 1.0:
            raise DriftGuardError(f"fail budget must be in (0, 1), got {self.fail_budget}")
        object.__setattr__(self, "fail_budget", float(self.fail_budget))

    def satisfied(self, survival: float, fail: float) -> bool:
        return survival >= 1.0 - self.fail_budget and fail <= self.fail_budget


def _as_limit(value, default):
    if value is None:
        return default
    if isinstance(value, float) and math.isinf(value):
        return value
    if int(value) != value:
        raise DriftGuardError(f"limits must be integer states, got {value}")
    return int(value)


@dataclass(frozen=True)
class LimitSpec:
    """Specification limits in normalized (integer state) units."""

    usl: int | float = math.inf
    lsl: int | float = -math.inf
    sidedness: Sidedness = Sidedness.TWO_SIDED

    def __post_init__(self):
        usl = _as_limit(self.usl, math.inf)
        lsl = _as_limit(self.lsl, -math.inf)
        side = Sidedness(self.sidedness)
        if not lsl < usl:
            raise DriftGuardError(f"need LSL < USL, got {lsl} and {usl}")
        if side is Sidedness.UPPER and (math.isinf(usl) or not math.isinf(lsl)):
            raise DriftGuardError("an upper spec needs a finite USL and no LSL")
        if side is Sidedness.LOWER and (math.isinf(lsl) or not math.isinf(usl)):
            raise DriftGuardError("a lower spec needs a finite LSL and no USL")
        if side is Sidedness.TWO_SIDED and (math.isinf(lsl) or math.isinf(usl)):
            raise DriftGuardError("a two-sided spec needs both limits")
        object.__setattr__(self, "usl", usl)
        object.__setattr__(self, "lsl", lsl)
        object.__setattr__(self, "sidedness", side)

    @classmethod
    def upper(cls, usl):
        return cls(usl, -math.inf, Sidedness.UPPER)

    @classmethod
    def lower(cls, lsl):
        return cls(math.inf, lsl, Sidedness.LOWER)

    @classmethod
    def two_sided(cls, lsl, usl):
        return cls(usl, lsl, Sidedness.TWO_SIDED)

    def to_dict(self):
        return {"usl": encode_limit(self.usl), "lsl": encode_limit(self.lsl),
                "sidedness": self.sidedness.value}

    @classmethod
    def from_dict(cls, data):
        return cls(decode_limit(data["usl"], math.inf), decode_limit(data["lsl"], -math.inf),
                   data["sidedness"])


@dataclass(frozen=True)
class GuardBandResult:
    """Optimal test limits; infeasible results carry ``None`` limits."""

    spec: LimitSpec
    utl: int | float | None
    ltl: int | float | None
    gbu: int | None
    gbl: int | None
    achieved_fail_prob: float | None
    per_readout_exceedance: tuple[float, ...] = field(default=())
    feasible: bool = True
    mode: str = "single-device"

    def to_dict(self):
        return {
            "mode": self.mode,
            "feasible": self.feasible,
            "spec": self.spec.to_dict(),
            "utl": encode_limit(self.utl),
            "ltl": encode_limit(self.ltl),
            "gbu": self.gbu,
            "gbl": self.gbl,
            "achieved_fail_prob": self.achieved_fail_prob,
            "per_readout_exceedance": [float(x) for x in self.per_readout_exceedance],
        }

    @classmethod
    def from_dict(cls, data):
        spec = LimitSpec.from_dict(data["spec"])
        return cls(
            spec,
            decode_limit(data["utl"], math.inf if data["feasible"] else None),
            decode_limit(data["ltl"], -math.inf if data["feasible"] else None),
            data["gbu"],
            data["gbl"],
            data["achieved_fail_prob"],
            tuple(data["per_readout_exceedance"]),
            data["feasible"],
            data["mode"],
        )

    def to_physical(self, meta: NormalizationMeta) -> dict:
        """Limits and band widths mapped back to physical units."""

        def lim(x):
            if x is None or math.isinf(x):
                return None
            return backtransform(x, meta)

        def width(w):
            return None if w is None else backtransform_width(w, meta)

        return {
            "usl": lim(self.spec.usl),
            "lsl": lim(self.spec.lsl),
            "utl": lim(self.utl),
            "ltl": lim(self.ltl),
            "gbu": width(self.gbu),
            "gbl": width(self.gbl),
        }


# --------------------------------------------------------------------------
# restricted propagation


def restrict(matrix: TransitionMatrix, row_interval, col_interval) -> np.ndarray:
    """Copy of the matrix with every entry outside ``rows x cols`` set to 0.

    Intervals are inclusive state bounds; the result is sub-stochastic.
    """
    states = matrix.states
    out = np.zeros_like(matrix.rows)
    (ra, rb), (ca, cb) = (_clip_window(states, *row_interval), _clip_window(states, *col_interval))
    out[ra : rb + 1, ca : cb + 1] = matrix.rows[ra : rb + 1, ca : cb + 1]
    return out


def _clip_window(states, lo, hi):
    lo = states.lo if lo is None or lo < states.lo else int(lo)
    hi = states.hi if hi is None or hi > states.hi else int(hi)
    if lo > hi:
        raise EmptyInterval(f"window [{lo}, {hi}] is empty within [{states.lo}, {states.hi}]")
    return lo - states.lo, hi - states.lo


def survival_profile(chain: DriftChain, start=None, lo=None, hi=None):
    """Surviving mass and per-readout first-exceedance masses for window ``[lo, hi]``.

    ``start`` is a pmf over drift states (zero drift by default); its mass
    outside the window is dropped before propagation.
    """
    lo_idx, hi_idx = _clip_window(chain.states, lo, hi)
    if start is None:
        zero = -chain.states.lo
        if not lo_idx <= zero <= hi_idx:
            return 0.0, np.zeros(chain.steps)
        v = chain.first_step_pmf.copy()
        leaked = 0.0
    else:
        start = np.asarray(start, dtype=float)
        if start.shape != (chain.states.size,):
            raise DimensionMismatch("start vector does not match the chain's state space")
        masked = np.zeros_like(start)
        masked[lo_idx : hi_idx + 1] = start[lo_idx : hi_idx + 1]
        v, leaked = convolve_start(chain, masked)
    first_out = leaked + v[:lo_idx].sum() + v[hi_idx + 1 :].sum()
    v[:lo_idx] = 0.0
    v[hi_idx + 1 :] = 0.0
    survival, later = kernels.restricted_survival(v, chain.matrix_stack, lo_idx, hi_idx)
    return float(survival), np.concatenate(([first_out], later))


def survive_probability(chain: DriftChain, start=None, lo=None, hi=None) -> float:
    """Probability that the total drift stays in ``[lo, hi]`` at readouts ``1..k``."""
    return survival_profile(chain, start, lo, hi)[0]


class _WindowEvaluator:
    """Memoized single-device evaluation for drift windows ``[-down, up]``."""

    def __init__(self, chain, target):
        self.chain = chain
        self.target = target
        self.cache = {}

    def __call__(self, down, up):
        key = (down, up)
        if key not in self.cache:
            lo = None if down is None else -down
            surv, exc = survival_profile(self.chain, None, lo, up)
            fail = float(exc.sum())
            self.cache[key] = (self.target.satisfied(surv, fail), fail, exc)
        return self.cache[key]


def _smallest_feasible(ok, top):
    """Smallest ``g`` in ``[0, top]`` with ``ok(g)``, for ``ok`` monotone; None if none."""
    if not ok(top):
        return None
    lo, hi = -1, top
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def optimize_one_sided_upper(chain: DriftChain, spec: LimitSpec, target=None) -> GuardBandResult:
    """Largest UTL whose worst-case part keeps its lifetime drift below ``USL - UTL``."""
    target = target or QualityTarget()
    if spec.sidedness is not Sidedness.UPPER:
        raise DriftGuardError("optimize_one_sided_upper needs an upper spec")
    evaluate = _WindowEvaluator(chain, target)
    top = chain.states.hi
    g = _smallest_feasible(lambda g: evaluate(None, g)[0], top)
    if g is None:
        _, fail, exc = evaluate(None, top)
        return GuardBandResult(spec, None, None, None, None, fail, tuple(exc), False)
    _, fail, exc = evaluate(None, g)
    return GuardBandResult(spec, spec.usl - g, -math.inf, g, None, fail, tuple(exc), True)


def optimize_one_sided_lower(chain: DriftChain, spec: LimitSpec, target=None) -> GuardBandResult:
    """Mirror of :func:`optimize_one_sided_upper` for a lower limit."""
    target = target or QualityTarget()
    if spec.sidedness is not Sidedness.LOWER:
        raise DriftGuardError("optimize_one_sided_lower needs a lower spec")
    evaluate = _WindowEvaluator(chain, target)
    top = -chain.states.lo
    g = _smallest_feasible(lambda g: evaluate(g, None)[0], top)
    if g is None:
        _, fail, exc = evaluate(top, None)
        return GuardBandResult(spec, None, None, None, None, fail, tuple(exc), False)
    _, fail, exc = evaluate(g, None)
    return GuardBandResult(spec, math.inf, spec.lsl + g, None, g, fail, tuple(exc), True)


def _tie_key(fail):
    # compare fail probabilities to 12 significant digits so mirror-image
    # windows of a symmetric chain tie despite rounding noise
    return float(f"{fail:.12e}")


def optimize_two_sided(chain: DriftChain, spec: LimitSpec, target=None) -> GuardBandResult:
    """Widest ``[LTL, UTL]`` whose worst-case part meets the target.

    The drift window is ``[LSL - LTL, USL - UTL] = [-gbl, gbu]``. Survival is
    monotone in both band widths, so the minimal feasible ``gbu`` for each
    ``gbl`` is non-increasing in ``gbl`` and the whole Pareto frontier is
    traced with one forward pass over ``gbl`` and one backward pass over
    ``gbu``. Among frontier points with the smallest ``gbl + gbu``, the
    smallest fail probability wins, then the larger UTL.
    """
    target = target or QualityTarget()
    if spec.sidedness is not Sidedness.TWO_SIDED:
        raise DriftGuardError("optimize_two_sided needs a two-sided spec")
    width = spec.usl - spec.lsl
    evaluate = _WindowEvaluator(chain, target)
    gl_top = min(-chain.states.lo, width - 1)
    gu_top = min(chain.states.hi, width - 1)

    def infeasible():
        _, fail, exc = evaluate(max(gl_top, 0), max(gu_top, 0))
        return GuardBandResult(spec, None, None, None, None, fail, tuple(exc), False)

    if width < 1 or not evaluate(gl_top, gu_top)[0]:
        return infeasible()
    frontier = []
    gu = gu_top
    for gl in range(gl_top + 1):
        if not evaluate(gl, gu)[0]:
            continue
        while gu > 0 and evaluate(gl, gu - 1)[0]:
            gu -= 1
        frontier.append((gl, gu))
        if gu == 0:
            break
    candidates = [(gl + gu, _tie_key(evaluate(gl, gu)[1]), gu, gl)
                  for gl, gu in frontier if gl + gu <= width - 1]
    if not candidates:
        return infeasible()
    _, _, gu, gl = min(candidates)
    _, fail, exc = evaluate(gl, gu)
    return GuardBandResult(spec, spec.usl - gu, spec.lsl + gl, gu, gl, fail, tuple(exc), True)


def optimize(chain: DriftChain, spec: LimitSpec, target=None) -> GuardBandResult:
    return {
        Sidedness.UPPER: optimize_one_sided_upper,
        Sidedness.LOWER: optimize_one_sided_lower,
        Sidedness.TWO_SIDED: optimize_two_sided,
    }[spec.sidedness](chain, spec, target)


# --------------------------------------------------------------------------
# batches with a known initial distribution


def _start_profiles(chain, init: LatticePmf, spec: LimitSpec):
    """Fail probability and exceedance vector for every start state with mass inside the spec limits."""
    lo_bound = init.lo if math.isinf(spec.lsl) else max(init.lo, spec.lsl)
    hi_bound = init.hi if math.isinf(spec.usl) else min(init.hi, spec.usl)
    xs, weights, fails, excs = [], [], [], []
    for x0 in range(lo_bound, hi_bound + 1):
        w = init.probs[x0 - init.lo]
        if w == 0.0:
            continue
        lo = None if math.isinf(spec.lsl) else spec.lsl - x0
        hi = None if math.isinf(spec.usl) else spec.usl - x0
        # the window always contains zero drift; clip it to the state space
        lo = None if lo is None or lo <= chain.states.lo else lo
        hi = None if hi is None or hi >= chain.states.hi else hi
        surv, exc = survival_profile(chain, None, lo, hi)
        xs.append(x0)
        weights.append(w)
        fails.append(exc.sum())
        excs.append(exc)
    return (np.array(xs, dtype=np.int64), np.array(weights), np.array(fails),
            np.array(excs).reshape(len(xs), chain.steps))


def batch_fail_probability(chain: DriftChain, init: LatticePmf, spec: LimitSpec, ltl, utl):
    """Conditional lifetime fail probability of a batch truncated to ``[ltl, utl]``.

    Returns ``(fail, per_readout_exceedance)``.
    """
    _check_init(init)
    xs, w, fails, excs = _start_profiles(chain, init, spec)
    lo = -math.inf if ltl is None else ltl
    hi = math.inf if utl is None else utl
    keep = (xs >= lo) & (xs <= hi)
    mass = w[keep].sum()
    if mass <= 0.0:
        raise EmptyTruncation(f"no initial mass inside [{ltl}, {utl}]")
    exc = (w[keep, None] * excs[keep]).sum(axis=0) / mass
    return float((w[keep] * fails[keep]).sum() / mass), exc


def _check_init(init: LatticePmf):
    if abs(init.probs.sum() - 1.0) > 1e-9:
        raise DriftGuardError("initial pmf must sum to 1")


def optimize_with_initial(chain: DriftChain, init: LatticePmf, spec: LimitSpec, target=None) -> GuardBandResult:
    """Test limits for a batch whose initial parameter pmf ``init`` is known.

    The batch is truncated to ``[LTL, UTL]`` and renormalized; every start
    state then drifts under the chain and must stay in ``[LSL, USL]`` at
    every readout. Only the set of included support points matters, so each
    candidate set is widened to the neighbouring support points (or spec
    limits) to maximize yield.
    """
    target = target or QualityTarget()
    _check_init(init)
    xs, w, fails, excs = _start_profiles(chain, init, spec)
    m = xs.size
    if m == 0:
        return GuardBandResult(spec, None, None, None, None, None, (), False, "batch")
    # prefix sums over support points: run xs[i..j] -> P[j + 1] - P[i]
    mass_cum = np.concatenate(([0.0], np.cumsum(w)))
    fail_cum = np.concatenate(([0.0], np.cumsum(w * fails)))
    exc_cum = np.vstack((np.zeros(chain.steps), np.cumsum(w[:, None] * excs, axis=0)))

    def run(i, j):
        mass = mass_cum[j + 1] - mass_cum[i]
        return (fail_cum[j + 1] - fail_cum[i]) / mass, (exc_cum[j + 1] - exc_cum[i]) / mass

    def feasible(fail, exc):
        return target.satisfied(1.0 - float(np.sum(exc)), float(fail))

    # a run of included support points is widened to just short of its neighbours
    low_ext = np.concatenate(([spec.lsl], xs[:-1] + 1))
    high_ext = np.concatenate((xs[1:] - 1, [spec.usl]))
    side = spec.sidedness
    if side is Sidedness.UPPER:
        for j in range(m - 1, -1, -1):
            fail, exc = run(0, j)
            if feasible(fail, exc):
                utl = int(high_ext[j])
                return GuardBandResult(spec, utl, -math.inf, int(spec.usl - utl), None,
                                       float(fail), tuple(exc), True, "batch")
    elif side is Sidedness.LOWER:
        for i in range(m):
            fail, exc = run(i, m - 1)
            if feasible(fail, exc):
                ltl = int(low_ext[i])
                return GuardBandResult(spec, math.inf, ltl, None, int(ltl - spec.lsl),
                                       float(fail), tuple(exc), True, "batch")
    else:
        best = None
        for i in range(m):
            j = np.arange(i, m)
            mass = mass_cum[j + 1] - mass_cum[i]
            fail = (fail_cum[j + 1] - fail_cum[i]) / mass
            surv = 1.0 - ((exc_cum[j + 1] - exc_cum[i]) / mass[:, None]).sum(axis=1)
            ltl = low_ext[i]
            utl = high_ext[j]
            ok = (surv >= 1.0 - target.fail_budget) & (fail <= target.fail_budget) & (utl > ltl)
            for jj in np.flatnonzero(ok):
                key = (-(utl[jj] - ltl), _tie_key(fail[jj]), -utl[jj])
                if best is None or key < best[0]:
                    best = (key, i, int(j[jj]))
        if best is not None:
            _, i, j = best
            fail, exc = run(i, j)
            ltl, utl = int(low_ext[i]), int(high_ext[j])
            return GuardBandResult(spec, utl, ltl, int(spec.usl - utl), int(ltl - spec.lsl),
                                   float(fail), tuple(exc), True, "batch")
    fail, exc = run(0, m - 1)
    return GuardBandResult(spec, None, None, None, None, float(fail), tuple(exc), False, "batch")
