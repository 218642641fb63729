import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftguard import (
    LatticePmf,
    NormalizationMeta,
    ReadoutSchedule,
    StateSpace,
    TrajectoryPanel,
    UnitSpace,
)
from driftguard.data_model import decode_limit, encode_limit
from driftguard.errors import DriftGuardError


def roundtrip(obj):
    return type(obj).from_dict(json.loads(json.dumps(obj.to_dict())))


class TestReadoutSchedule:
    def test_steps(self):
        assert ReadoutSchedule((0, 168, 500)).steps == 2

    @pytest.mark.parametrize("times", [(0,), (0, 0), (5, 3), (-1, 2), (0, math.nan)])
    def test_rejects(self, times):
        with pytest.raises(DriftGuardError):
            ReadoutSchedule(times)


class TestTrajectoryPanel:
    def test_shape_must_match_schedule(self):
        with pytest.raises(DriftGuardError):
            TrajectoryPanel(ReadoutSchedule((0, 1, 2)), np.zeros((3, 2)), ("a", "b", "c"))

    def test_needs_two_devices(self):
        with pytest.raises(DriftGuardError):
            TrajectoryPanel(ReadoutSchedule((0, 1)), np.zeros((1, 2)), ("a",))

    def test_normalized_requires_integers(self):
        with pytest.raises(DriftGuardError):
            TrajectoryPanel(ReadoutSchedule((0, 1)), [[0, 0.5], [1, 1]], ("a", "b"),
                            UnitSpace.NORMALIZED)

    def test_rejects_missing_cells(self):
        with pytest.raises(DriftGuardError):
            TrajectoryPanel(ReadoutSchedule((0, 1)), [[0, np.nan], [1, 1]], ("a", "b"))

    def test_values_are_read_only(self):
        p = TrajectoryPanel(ReadoutSchedule((0, 1)), [[0, 1], [1, 1]], ("a", "b"))
        with pytest.raises(ValueError):
            p.values[0, 0] = 5

    def test_roundtrip(self):
        p = TrajectoryPanel(ReadoutSchedule((0, 10.5)), [[0.1, 0.3], [2.5, -1]], ("x", "y"))
        assert roundtrip(p) == p


class TestStateSpace:
    def test_must_contain_zero(self):
        with pytest.raises(DriftGuardError):
            StateSpace(1, 3)

    def test_basics(self):
        s = StateSpace(-2, 3)
        assert s.size == 6
        assert s.index(0) == 2
        assert 3 in s and 4 not in s
        np.testing.assert_array_equal(s.unit(), [0, 0, 1, 0, 0, 0])
        assert roundtrip(s) == s


class TestLatticePmf:
    def test_from_samples(self):
        pmf = LatticePmf.from_samples([3, 1, 1, 2])
        assert pmf.lo == 1 and pmf.hi == 3
        np.testing.assert_allclose(pmf.probs, [0.5, 0.25, 0.25])

    def test_roundtrip(self):
        pmf = LatticePmf(-3, [0.2, 0.0, 0.8])
        assert roundtrip(pmf) == pmf


def test_meta_roundtrip():
    m = NormalizationMeta(0.5, 245.5, (0.0, 1.0), (0.0, -0.25))
    assert roundtrip(m) == m
    with pytest.raises(DriftGuardError):
        NormalizationMeta(0.0, 1.0)


def test_limit_encoding():
    assert encode_limit(math.inf) is None
    assert decode_limit(None, -math.inf) == -math.inf
    assert decode_limit(encode_limit(7), None) == 7


@given(
    st.integers(2, 6).flatmap(
        lambda k: st.tuples(
            st.lists(st.floats(0, 1e4, allow_nan=False), min_size=k, max_size=k, unique=True),
            st.lists(
                st.lists(st.integers(-1000, 1000), min_size=k, max_size=k), min_size=2, max_size=8
            ),
        )
    )
)
def test_panel_json_roundtrip(data):
    times, values = data
    p = TrajectoryPanel(
        ReadoutSchedule(tuple(sorted(times))),
        np.array(values, dtype=float),
        tuple(str(i) for i in range(len(values))),
        UnitSpace.NORMALIZED,
    )
    assert roundtrip(p) == p
    assert p.values.shape[1] == len(p.schedule)
