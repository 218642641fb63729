import numpy as np

from driftguard import DriftChain, ReadoutSchedule, TrajectoryPanel, UnitSpace


def integer_panel(values, times=None):
    values = np.asarray(values, dtype=float)
    if times is None:
        times = tuple(100.0 * k for k in range(values.shape[1]))
    ids = tuple(f"d{i}" for i in range(values.shape[0]))
    return TrajectoryPanel(ReadoutSchedule(tuple(times)), values, ids, UnitSpace.NORMALIZED)


def raw_panel(values, times=None):
    values = np.asarray(values, dtype=float)
    if times is None:
        times = tuple(100.0 * k for k in range(values.shape[1]))
    ids = tuple(f"d{i}" for i in range(values.shape[0]))
    return TrajectoryPanel(ReadoutSchedule(tuple(times)), values, ids, UnitSpace.RAW)


def fuzz_panel(rng, devices, readouts):
    """Random integer panel mixing dependence, spread and degenerate steps."""
    x0 = np.rint(rng.normal(0, rng.uniform(0, 4), devices))
    s = np.zeros((devices, readouts))
    for k in range(1, readouts):
        kind = rng.integers(0, 5)
        prev = s[:, k - 1]
        noise = np.rint(rng.normal(rng.uniform(-1, 1), rng.choice([0.0, 0.4, 1.0, 2.5]), devices))
        if kind == 0:
            s[:, k] = prev
        elif kind == 1:
            s[:, k] = prev + noise
        elif kind == 2:
            s[:, k] = np.rint(rng.uniform(-1, 2) * prev) + noise
        elif kind == 3:
            s[:, k] = prev + rng.geometric(rng.uniform(0.3, 0.9), devices) - 1
        else:
            s[:, k] = noise
    return integer_panel(x0[:, None] + s)


def identity_chain(n_states=5, steps=3, lo=None):
    lo = -(n_states // 2) if lo is None else lo
    first = np.zeros(n_states)
    first[-lo] = 1.0
    return DriftChain.from_arrays(lo, first, [np.eye(n_states)] * (steps - 1))


def shift_chain(m, steps, pad=2):
    """Deterministic drift of +m per step (total m * steps)."""
    lo = min(-pad, m * steps - pad)
    hi = max(pad, m * steps + pad)
    n = hi - lo + 1
    first = np.zeros(n)
    first[m - lo] = 1.0
    mat = np.zeros((n, n))
    for i in range(n):
        mat[i, min(max(i + m, 0), n - 1)] = 1.0
    return DriftChain.from_arrays(lo, first, [mat] * (steps - 1))


def total_shift_chain(m, steps=3, pad=2):
    """First step moves every part by exactly m; later steps change nothing."""
    lo, hi = min(-pad, m - pad), max(pad, m + pad)
    n = hi - lo + 1
    first = np.zeros(n)
    first[m - lo] = 1.0
    return DriftChain.from_arrays(lo, first, [np.eye(n)] * (steps - 1))


def enumerate_batch(chain, init_lo, init_probs, ltl, utl, lsl, usl):
    """Conditional batch fail probability by explicit (start, path) enumeration."""
    import itertools

    states = chain.states
    mats = [m.rows for m in chain.matrices]
    total = fail = 0.0
    for a, w in enumerate(init_probs):
        x0 = init_lo + a
        if w == 0 or not ltl <= x0 <= utl:
            continue
        total += w
        for path in itertools.product(range(states.size), repeat=chain.steps):
            p = chain.first_step_pmf[path[0]]
            for t in range(1, chain.steps):
                p *= mats[t - 1][path[t - 1], path[t]]
            if p == 0:
                continue
            xs = [x0 + states.lo + i for i in path]
            if any(not lsl <= x <= usl for x in xs):
                fail += w * p
    return fail / total
