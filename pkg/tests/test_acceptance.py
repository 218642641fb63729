"""Acceptance suite: one test group per numbered criterion.

Each test carries ``@pytest.mark.criterion(n, title)``; the terminal summary
prints one PASS/FAIL line per criterion.
"""
import json
import os
import subprocess
import sys
import time
from importlib import resources

import numpy as np
import pytest
from scipy.stats import norm

from driftguard import (
    DriftChain,
    KernelSpec,
    LimitSpec,
    PatternKind,
    PatternSpec,
    QualityTarget,
    StateSpace,
    enumerate_paths,
    fit_chain,
    generate_pattern,
    mc_exceedance,
    optimize,
    propagate,
    survival_profile,
    survive_probability,
    validate_roundtrip,
)
from driftguard.drift_model import bin_density, build_first_step, estimate_step_density, fit_step_regression
from driftguard.guardband import optimize_two_sided
from driftguard.oracle import random_chain
from driftguard.simulate import dependence_demo_panel

from helpers import fuzz_panel, identity_chain, shift_chain, total_shift_chain

criterion = pytest.mark.criterion


# 1 ---------------------------------------------------------------------------


@criterion(1, "stochasticity of 1000 fuzzed fitted chains, < 60 s")
def test_stochasticity_suite():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    row_err = pmf_err = 0.0
    for _ in range(1000):
        panel = fuzz_panel(rng, int(rng.integers(10, 101)), int(rng.integers(3, 7)))
        chain = fit_chain(panel)
        for m in chain.matrices:
            assert np.all(m.rows >= 0.0)
            row_err = max(row_err, float(np.max(np.abs(m.rows.sum(axis=1) - 1.0))))
        for pmf in propagate(chain):
            pmf_err = max(pmf_err, abs(float(pmf.sum()) - 1.0))
    elapsed = time.perf_counter() - start
    print(f"\ncriterion 1: max row error {row_err:.2e}, max pmf error {pmf_err:.2e}, {elapsed:.1f} s")
    assert row_err <= 1e-12
    assert pmf_err <= 1e-10
    assert elapsed < 60.0


# 2 ---------------------------------------------------------------------------


@criterion(2, "rectangular h=1 kernel reproduces the empirical histogram")
def test_histogram_equivalence():
    rng = np.random.default_rng(7)
    rect = KernelSpec("rectangular", 1.0)
    worst = 0.0
    for _ in range(100):
        samples = rng.integers(-15, 16, int(rng.integers(1, 200)))
        states = StateSpace(-16, 16)
        empirical = np.bincount(samples - states.lo, minlength=states.size) / samples.size
        binned = bin_density(estimate_step_density(samples, rect), states)
        first = build_first_step(fit_step_regression(np.zeros(samples.size), samples), rect, states)
        worst = max(worst, np.max(np.abs(binned - empirical)), np.max(np.abs(first - empirical)))
    print(f"\ncriterion 2: max abs error {worst:.2e}")
    assert worst < 1e-12


# 3 ---------------------------------------------------------------------------


@criterion(3, "restricted products equal path enumeration on 200 chains x 5 windows")
def test_oracle_equivalence():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        chain = random_chain(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)))
        start = rng.dirichlet(np.ones(chain.states.size)) if rng.random() < 0.3 else None
        for _ in range(5):
            a, b = sorted(int(x) for x in rng.integers(chain.states.lo, chain.states.hi + 1, 2))
            if start is None:
                a, b = min(a, 0), max(b, 0)
            got = survive_probability(chain, start, a, b)
            want = enumerate_paths(chain, start, a, b)[0]
            worst = max(worst, abs(got - want))
    print(f"\ncriterion 3: max abs error {worst:.2e}")
    assert worst <= 1e-12


# 4 ---------------------------------------------------------------------------


@criterion(4, "Monte Carlo exceedance inside its 99% CI in >= 18/20 chains")
def test_monte_carlo_consistency():
    rng = np.random.default_rng(4)
    inside = 0
    for seed in range(20):
        chain = random_chain(rng, int(rng.integers(5, 9)), int(rng.integers(2, 5)), lo=-2)
        # windows strictly inside the state space so exits are possible on both sides
        lo = int(rng.integers(-1, 1))
        hi = int(rng.integers(0, chain.states.hi))
        truth = float(np.sum(enumerate_paths(chain, None, lo, hi)[1]))
        _, (ci_lo, ci_hi) = mc_exceedance(chain, lo, hi, n=10**6, seed=seed)
        inside += ci_lo <= truth <= ci_hi
    print(f"\ncriterion 4: {inside}/20 inside")
    assert inside >= 18


# 5 ---------------------------------------------------------------------------


def _guard_chains():
    rng = np.random.default_rng(5)
    chains = []
    for i in range(100):
        if i % 2:
            chains.append(random_chain(rng, int(rng.integers(3, 12)), int(rng.integers(2, 5)),
                                       sparsity=float(rng.uniform(0, 0.6))))
        else:
            chains.append(fit_chain(fuzz_panel(rng, int(rng.integers(10, 80)), int(rng.integers(3, 6)))))
    return chains


def _ok(chain, target, lo, hi):
    surv, exc = survival_profile(chain, None, lo, hi)
    return target.satisfied(surv, float(exc.sum()))


@criterion(5, "optimizer outputs are feasible and maximal on 100 chains")
@pytest.mark.parametrize("budget", [1e-3, 1e-6])
def test_guard_band_correctness(budget):
    target = QualityTarget(budget)
    checked = 0
    for chain in _guard_chains():
        up = optimize(chain, LimitSpec.upper(50), target)
        if up.feasible:
            assert _ok(chain, target, None, up.gbu)
            assert up.gbu == 0 or not _ok(chain, target, None, up.gbu - 1)
            checked += 1
        low = optimize(chain, LimitSpec.lower(-50), target)
        if low.feasible:
            assert _ok(chain, target, -low.gbl, None)
            assert low.gbl == 0 or not _ok(chain, target, -(low.gbl - 1), None)
            checked += 1
        two = optimize(chain, LimitSpec.two_sided(-50, 50), target)
        if two.feasible:
            assert _ok(chain, target, -two.gbl, two.gbu)
            assert two.achieved_fail_prob <= budget
            w = two.gbl + two.gbu
            # every window one state wider in UTL - LTL (one state less of guard band) fails
            for gl in range(w):
                assert not _ok(chain, target, -gl, w - 1 - gl)
            checked += 1
    print(f"\ncriterion 5 (budget {budget:g}): {checked} feasible results checked")
    assert checked > 0


# 6 ---------------------------------------------------------------------------


IDENTITY_CASES = [(n, k) for n in (3, 5, 9) for k in (1, 2, 4)] + [(15, 3)]
SHIFT_CASES = [(m, k) for m in (1, 2, 3, 5, 8) for k in (1, 2)]


@criterion(6, "identity chain gives zero bands; deterministic +m drift gives GBU = m")
@pytest.mark.parametrize("n_states, steps", IDENTITY_CASES)
def test_identity_limits(n_states, steps):
    chain = identity_chain(n_states, steps)
    for spec in (LimitSpec.upper(7), LimitSpec.lower(-7), LimitSpec.two_sided(-7, 7)):
        r = optimize(chain, spec)
        assert r.feasible
        assert (r.gbu or 0) == 0 and (r.gbl or 0) == 0


@criterion(6, "identity chain gives zero bands; deterministic +m drift gives GBU = m")
@pytest.mark.parametrize("m, per_step", SHIFT_CASES)
def test_deterministic_drift(m, per_step):
    chain = total_shift_chain(m, steps=3) if per_step == 1 else shift_chain(m, steps=2)
    total = m if per_step == 1 else 2 * m
    assert optimize(chain, LimitSpec.upper(20)).gbu == total
    r = optimize(chain, LimitSpec.two_sided(-20, 20))
    assert (r.gbu, r.gbl) == (total, 0)
    mirror = total_shift_chain(-m, steps=3) if per_step == 1 else shift_chain(-m, steps=2)
    assert optimize(mirror, LimitSpec.lower(-20)).gbl == total


# 7 ---------------------------------------------------------------------------


@criterion(7, "nine-pattern round trip with 10000 resampled devices, < 120 s")
def test_nine_pattern_roundtrip():
    start = time.perf_counter()
    failures = []
    for kind in PatternKind:
        spec = PatternSpec(kind)
        rep = validate_roundtrip(generate_pattern(spec), n=10000, seed=1,
                                 designed_pairs=spec.designed_pairs())
        print(f"\n  {kind.value:22s} mean err {max(rep.mean_error):.3f}  "
              f"rel sd err {max(rep.rel_std_error):.3f}  "
              f"signs {[rep.sign_match[k - 1] for k in rep.designed_pairs]}", end="")
        if max(rep.mean_error) > 0.5 or max(rep.rel_std_error) > 0.15:
            failures.append(kind.value)
        if not all(rep.sign_match[k - 1] for k in rep.designed_pairs):
            failures.append(kind.value)
    elapsed = time.perf_counter() - start
    print(f"\ncriterion 7: {elapsed:.1f} s")
    assert not failures
    assert elapsed < 120.0


# 8 ---------------------------------------------------------------------------


@criterion(8, "fitted dependence signs follow the generator design")
def test_dependence_sign_recovery():
    beta = [f.beta1 for f in fit_chain(dependence_demo_panel()).fits]
    print(f"\ncriterion 8: beta1 per step {np.round(beta, 3).tolist()}")
    assert abs(beta[0]) < 0.1
    assert abs(beta[1]) < 0.1
    assert beta[2] > 0.1
    assert beta[3] < -0.1


# 9 ---------------------------------------------------------------------------


def _banded_chain(n, steps=4):
    lo = -(n // 2)
    x = np.arange(lo, lo + n)
    sd = n / 24

    def row(c):
        r = norm.cdf(x + 0.5, c, sd) - norm.cdf(x - 0.5, c, sd)
        return r / r.sum()

    return DriftChain.from_arrays(lo, row(0.3 * sd), [np.array([row(0.9 * j + 0.2 * sd) for j in x])] *
                                  (steps - 1))


@criterion(9, "300-state two-sided optimization < 60 s, log-log slope <= 5.5")
def test_performance():
    sizes = (50, 100, 200, 300)
    times = []
    for n in sizes:
        chain = _banded_chain(n)
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            r = optimize_two_sided(chain, LimitSpec.two_sided(-n, n), QualityTarget(1e-6))
            best = min(best, time.perf_counter() - t0)
        assert r.feasible
        times.append(best)
    slope = np.polyfit(np.log(sizes), np.log(times), 1)[0]
    print(f"\ncriterion 9: times {[f'{t:.4f}' for t in times]} s, slope {slope:.2f}")
    assert times[-1] < 60.0
    assert slope <= 5.5


# 10 --------------------------------------------------------------------------


@criterion(10, "CLI fit -> guardband is byte-identical across runs")
def test_end_to_end_determinism(tmp_path):
    fixture = str(resources.files("driftguard") / "data" / "fixture_panel.csv")
    blobs = []
    for run in ("a", "b"):
        chain = tmp_path / f"chain_{run}.json"
        result = tmp_path / f"result_{run}.json"
        base = [sys.executable, "-m", "driftguard"]
        env = dict(os.environ, PYTHONHASHSEED=run == "a" and "1" or "2")
        subprocess.run(base + ["fit", fixture, "--seed", "0", "--out", str(chain)],
                       check=True, env=env)
        subprocess.run(base + ["guardband", str(chain), "--usl", "262", "--lsl", "238",
                               "--seed", "0", "--out", str(result)], check=True, env=env,
                       stdout=subprocess.DEVNULL)
        blobs.append((chain.read_bytes(), result.read_bytes()))
    assert blobs[0] == blobs[1]
    assert json.loads(blobs[0][1])["result"]["feasible"]
