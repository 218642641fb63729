import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from driftguard import DriftChain, enumerate_paths, mc_exceedance, survive_probability
from driftguard.errors import TooLarge
from driftguard.oracle import random_chain, wilson_interval

from helpers import identity_chain, total_shift_chain


class TestEnumerate:
    def test_identity(self):
        surv, exc = enumerate_paths(identity_chain(5, 4), None, -1, 1)
        assert surv == 1.0 and exc == [0.0] * 4

    def test_half_above(self):
        chain = DriftChain.from_arrays(0, [0.5, 0.5], [])
        surv, exc = enumerate_paths(chain, None, 0, 0)
        assert surv == 0.5 and exc == [0.5]

    def test_matches_restricted_product(self):
        chain = random_chain(np.random.default_rng(1), 3, 2, lo=-1)
        assert_allclose(enumerate_paths(chain, None, -1, 0)[0],
                        survive_probability(chain, None, -1, 0), atol=1e-12)

    def test_too_large(self):
        with pytest.raises(TooLarge):
            enumerate_paths(identity_chain(11, 2))
        with pytest.raises(TooLarge):
            enumerate_paths(identity_chain(3, 6))

    @given(st.integers(0, 10**6))
    def test_conservation(self, seed):
        rng = np.random.default_rng(seed)
        chain = random_chain(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)))
        lo = int(rng.integers(chain.states.lo, 1))
        hi = int(rng.integers(0, chain.states.hi + 1))
        surv, exc = enumerate_paths(chain, None, lo, hi)
        assert_allclose(surv + sum(exc), 1.0, atol=1e-12)


def test_wilson_reference_values():
    z2 = 6.634896601021214  # 99% two-sided normal quantile, squared
    lo, hi = wilson_interval(0, 10**4)
    assert lo == 0.0
    assert_allclose(hi, z2 / (10**4 + z2), rtol=1e-12)
    lo, hi = wilson_interval(5000, 10**4)
    assert_allclose([lo, hi], [0.5 - np.sqrt(z2) * 0.005 / (1 + z2 / 1e4)] * 1 +
                    [0.5 + np.sqrt(z2) * 0.005 / (1 + z2 / 1e4)], rtol=1e-3)


class TestMonteCarlo:
    def test_identity(self):
        est, (lo, hi) = mc_exceedance(identity_chain(5, 3), -1, 1, n=10**4)
        assert est == 0.0 and lo == 0.0 < hi

    def test_certain_exceedance(self):
        est, _ = mc_exceedance(total_shift_chain(2), -1, 1, n=10**4)
        assert est == 1.0

    def test_needs_enough_samples(self):
        with pytest.raises(ValueError):
            mc_exceedance(identity_chain(), -1, 1, n=100)

    def test_reproducible(self, small_chain):
        assert mc_exceedance(small_chain, -1, 1, 10**4, seed=4) == mc_exceedance(
            small_chain, -1, 1, 10**4, seed=4)

    def test_coverage(self):
        chain = random_chain(np.random.default_rng(21), 5, 3, lo=-2)
        truth = 1.0 - enumerate_paths(chain, None, -1, 1)[0]
        covered = 0
        for seed in range(100):
            _, (lo, hi) = mc_exceedance(chain, -1, 1, 10**4, seed=seed)
            covered += lo <= truth <= hi
        assert covered >= 99
