import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from driftguard import (
    DriftChain,
    LatticePmf,
    PatternKind,
    PatternSpec,
    fit_chain,
    generate_pattern,
    propagate,
    sample_trajectories,
    validate_roundtrip,
)
from driftguard.errors import DriftGuardError
from driftguard.simulate import lag1_increment_correlation, make_rng, sample_drift_paths

from helpers import identity_chain


def test_identity_paths_constant():
    panel = sample_trajectories(identity_chain(5, 4), 50, seed=1, initial=LatticePmf(-3, [0.5, 0.5]))
    assert np.all(panel.values == panel.values[:, :1])


def test_flip_chain_alternates():
    chain = DriftChain.from_arrays(0, [0.0, 1.0], [[[0, 1], [1, 0]]] * 3)
    paths = sample_drift_paths(chain, 20, make_rng(0))
    assert_array_equal(paths, np.tile([1, 0, 1, 0], (20, 1)))


def test_marginals_match_propagation(small_chain):
    n = 10**6
    paths = sample_drift_paths(small_chain, n, make_rng(5))
    for k, pmf in enumerate(propagate(small_chain)):
        counts = np.bincount(paths[:, k] - small_chain.states.lo, minlength=pmf.size)
        sd = np.sqrt(n * pmf * (1 - pmf))
        assert np.all(np.abs(counts - n * pmf) <= 4 * sd + 1e-9)


def test_seeded_determinism(small_chain):
    a = sample_trajectories(small_chain, 100, seed=9)
    b = sample_trajectories(small_chain, 100, seed=9)
    c = sample_trajectories(small_chain, 100, seed=10)
    assert a == b and a != c


def test_frozen_outside_state_space():
    chain = DriftChain.from_arrays(-1, [0.0, 0.0, 1.0], [np.eye(3)])
    paths = sample_drift_paths(chain, 5, make_rng(0), start_drift=np.full(5, 3))
    assert_array_equal(paths, 4)


class TestPatterns:
    def test_constant(self):
        p = generate_pattern(PatternSpec("constant", devices=30))
        assert np.all(np.diff(p.values, axis=1) == 0)

    def test_linear_drift(self):
        p = generate_pattern(PatternSpec("linear-drift", devices=30))
        assert_array_equal(np.diff(p.values, axis=1), 1.0)
        assert_allclose(np.diff(p.values.mean(axis=0)), 1.0, rtol=1e-12)

    @pytest.mark.parametrize("kind", list(PatternKind))
    def test_integer_and_reproducible(self, kind):
        a = generate_pattern(PatternSpec(kind, devices=25, readouts=4, seed=3))
        assert a == generate_pattern(PatternSpec(kind, devices=25, readouts=4, seed=3))
        assert a.values.shape == (25, 4)
        assert_array_equal(a.values, np.rint(a.values))

    def test_designed_signs(self):
        pos = fit_chain(generate_pattern(PatternSpec("positive-correlation")))
        neg = fit_chain(generate_pattern(PatternSpec("negative-correlation")))
        assert all(f.beta1 > 1 for f in pos.fits[1:])
        assert all(f.beta1 < 0 for f in neg.fits[1:])
        c = lag1_increment_correlation(generate_pattern(PatternSpec("mixed")))
        assert c[0] > 0 > c[1]

    def test_spec_validation(self):
        with pytest.raises(DriftGuardError):
            PatternSpec("constant", devices=1)
        with pytest.raises(ValueError):
            PatternSpec("sawtooth")


class TestRoundTrip:
    def test_constant_panel_exact(self):
        r = validate_roundtrip(generate_pattern(PatternSpec("constant", devices=40)), n=2000)
        assert r.passed()
        assert_allclose(r.rel_std_error, 0.0, atol=0.05)
        assert r.corr_source == r.corr_model == (0.0, 0.0, 0.0)

    def test_linear_drift(self):
        r = validate_roundtrip(generate_pattern(PatternSpec("linear-drift")), n=5000)
        assert max(r.mean_error) <= 0.5

    def test_report_dict(self):
        spec = PatternSpec("negative-correlation", devices=60)
        r = validate_roundtrip(generate_pattern(spec), n=2000, seed=4,
                               designed_pairs=spec.designed_pairs())
        d = r.to_dict()
        assert d["rng"] == "PCG64" and d["seed"] == 4 and d["designed_pairs"] == [1, 2, 3]
        assert all(np.isfinite(d["mean_error"] + d["rel_std_error"] + d["corr_model"]))
