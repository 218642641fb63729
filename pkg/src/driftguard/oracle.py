"""Slow, independent reference computations used to audit guard bands.

Nothing here touches the restricted-matrix machinery in :mod:`guardband`:
``enumerate_paths`` walks every state path explicitly and ``mc_exceedance``
samples paths at random.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

from .drift_model import DriftChain
from .errors import DimensionMismatch, TooLarge

MAX_ENUM_STATES = 10
MAX_ENUM_STEPS = 5


def enumerate_paths(chain: DriftChain, start=None, lo=None, hi=None):
    """Exact survival and first-exceedance masses by exhaustive path walk.

    A path survives if its total drift stays in ``[lo, hi]`` at every
    readout ``1..k``. A path is credited to ``exceed[r]`` at the first
    readout ``r + 1`` where it leaves; its continuation sums to its own
    probability and is not walked further. Start mass outside ``[lo, hi]`` is
    dropped.

    Returns ``(survive, exceed)`` with ``exceed`` of length ``k``.
    """
    states = chain.states
    if states.size > MAX_ENUM_STATES or chain.steps > MAX_ENUM_STEPS:
        raise TooLarge(
            f"enumeration limited to {MAX_ENUM_STATES} states and {MAX_ENUM_STEPS} steps"
        )
    lo = states.lo if lo is None else lo
    hi = states.hi if hi is None else hi
    start = states.unit() if start is None else np.asarray(start, dtype=float)
    if start.shape != (states.size,):
        raise DimensionMismatch("start vector does not match the chain's state space")
    first = chain.first_step_pmf
    mats = [m.rows for m in chain.matrices]
    exceed = [0.0] * chain.steps
    survive = 0.0

    def inside(x):
        return lo <= x <= hi and states.lo <= x <= states.hi

    def walk(x, prob, step):
        # x is the drift at readout ``step`` (1-based), already known to be inside
        nonlocal survive
        if step == chain.steps:
            survive += prob
            return
        row = mats[step - 1][x - states.lo]
        for j, p in enumerate(row):
            if p == 0.0:
                continue
            y = states.lo + j
            if inside(y):
                walk(y, prob * p, step + 1)
            else:
                exceed[step] += prob * p

    for si, ps in enumerate(start):
        s = states.lo + si
        if ps == 0.0 or not lo <= s <= hi:
            continue
        for di, pd in enumerate(first):
            if pd == 0.0:
                continue
            x = s + states.lo + di
            if inside(x):
                walk(x, ps * pd, 1)
            else:
                exceed[0] += ps * pd
    return survive, exceed


def wilson_interval(successes: int, n: int, level: float = 0.99) -> tuple[float, float]:
    z = float(norm.ppf(0.5 + level / 2))
    p = successes / n
    denom = 1 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def mc_exceedance(chain: DriftChain, lo, hi, n=10**5, seed=0, start=None, level=0.99):
    """Monte Carlo first-exceedance frequency with a Wilson interval.

    Start drifts are drawn from ``start`` restricted to ``[lo, hi]`` (zero
    drift by default), so the estimate is conditional on starting inside.
    """
    from .simulate import sample_drift_paths

    if n < 10**4:
        raise ValueError("Monte Carlo exceedance needs n >= 10^4")
    rng = np.random.Generator(np.random.PCG64(seed))
    states = chain.states
    start_vec = states.unit() if start is None else np.asarray(start, dtype=float)
    mask = (states.states >= lo) & (states.states <= hi)
    start_vec = np.where(mask, start_vec, 0.0)
    start_vec = start_vec / start_vec.sum()
    start_drift = states.lo + rng.choice(states.size, size=n, p=start_vec)
    paths = sample_drift_paths(chain, n, rng, start_drift=start_drift)
    exceeded = np.any((paths < lo) | (paths > hi), axis=1)
    hits = int(exceeded.sum())
    return hits / n, wilson_interval(hits, n, level)


def random_chain(rng, n_states: int, steps: int, lo: int | None = None, sparsity: float = 0.3) -> DriftChain:
    """Random row-stochastic chain for audits: Dirichlet rows with random zeros.

    Every row keeps at least one positive entry; ``lo`` defaults to a random
    offset that keeps 0 inside the state space.
    """
    if lo is None:
        lo = -int(rng.integers(0, n_states))
    lo = min(int(lo), 0)
    if lo + n_states - 1 < 0:
        raise ValueError("state space must contain 0")

    def rows(m):
        p = rng.dirichlet(np.ones(n_states), size=m)
        p[rng.random(p.shape) < sparsity] = 0.0
        empty = p.sum(axis=1) == 0
        p[empty, rng.integers(0, n_states, empty.sum())] = 1.0
        return p / p.sum(axis=1, keepdims=True)

    first = rows(1)[0]
    mats = [rows(n_states) for _ in range(steps - 1)]
    return DriftChain.from_arrays(lo, first, mats)
