"""Immutable core types shared by every module.

All array-valued fields are stored as read-only numpy arrays. Each type has a
``to_dict``/``from_dict`` pair producing plain JSON-compatible structures;
the schema is documented in ``docs/schema.md``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DriftGuardError, IncompletePanel


def frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def encode_limit(value):
    """JSON has no infinity; unbounded limits are written as null."""
    if value is None or (isinstance(value, float) and math.isinf(value)):
        return None
    return value


def decode_limit(value, default):
    return default if value is None else value


@dataclass(frozen=True)
class ReadoutSchedule:
    """Stress hours of the readouts, ``times[0]`` being the pre-stress readout."""

    times: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if len(times) < 2:
            raise DriftGuardError("a readout schedule needs at least two readouts")
        if not all(math.isfinite(t) for t in times) or times[0] < 0:
            raise DriftGuardError("readout times must be finite and non-negative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DriftGuardError(f"readout times must be strictly increasing: {times}")

    def __len__(self):
        return len(self.times)

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def to_dict(self):
        return {"times": list(self.times)}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["times"]))


class UnitSpace(str, enum.Enum):
    RAW = "raw-physical"
    NORMALIZED = "integer-normalized"


@dataclass(frozen=True, eq=False)
class TrajectoryPanel:
    """Complete device x readout matrix of parameter readings."""

    schedule: ReadoutSchedule
    values: np.ndarray
    device_ids: tuple[str, ...]
    unit_space: UnitSpace = UnitSpace.RAW

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DriftGuardError("panel values must be a 2-d matrix")
        d, cols = values.shape
        if cols != len(self.schedule):
            raise DriftGuardError(
                f"panel has {cols} columns but the schedule has {len(self.schedule)} readouts"
            )
        if d < 2:
            raise DriftGuardError("a panel needs at least two devices")
        if not np.all(np.isfinite(values)):
            raise IncompletePanel("panel contains missing or non-finite readings")
        ids = tuple(str(i) for i in self.device_ids)
        if len(ids) != d:
            raise DriftGuardError("one device id per panel row is required")
        unit = UnitSpace(self.unit_space)
        if unit is UnitSpace.NORMALIZED and not np.array_equal(values, np.round(values)):
            raise DriftGuardError("integer-normalized panels must hold integer values")
        object.__setattr__(self, "values", frozen_array(values))
        object.__setattr__(self, "device_ids", ids)
        object.__setattr__(self, "unit_space", unit)

    @property
    def n_devices(self) -> int:
        return self.values.shape[0]

    @property
    def n_readouts(self) -> int:
        return self.values.shape[1]

    def replace_values(self, values, unit_space=None) -> "TrajectoryPanel":
        return TrajectoryPanel(
            self.schedule, values, self.device_ids, unit_space or self.unit_space
        )

    def __eq__(self, other):
        if not isinstance(other, TrajectoryPanel):
            return NotImplemented
        return (
            self.schedule == other.schedule
            and self.device_ids == other.device_ids
            and self.unit_space == other.unit_space
            and np.array_equal(self.values, other.values)
        )

    def to_dict(self):
        return {
            "schedule": self.schedule.to_dict(),
            "device_ids": list(self.device_ids),
            "unit_space": self.unit_space.value,
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            ReadoutSchedule.from_dict(data["schedule"]),
            np.array(data["values"], dtype=float),
            tuple(data["device_ids"]),
            UnitSpace(data["unit_space"]),
        )


@dataclass(frozen=True)
class NormalizationMeta:
    """Everything needed to map normalized results back to physical units.

    ``offset_shifts`` are the tester-offset shifts actually applied (physical
    units, snapped to whole steps); ``offset_residuals`` hold the sub-step
    remainder that could not be applied without leaving the lattice.
    """

    step: float
    origin: float
    offset_shifts: tuple[float, ...] = ()
    offset_residuals: tuple[float, ...] = ()

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise DriftGuardError(f"quantization step must be positive, got {self.step}")
        object.__setattr__(self, "step", float(self.step))
        object.__setattr__(self, "origin", float(self.origin))
        object.__setattr__(self, "offset_shifts", tuple(float(s) for s in self.offset_shifts))
        object.__setattr__(
            self, "offset_residuals", tuple(float(s) for s in self.offset_residuals)
        )

    def to_dict(self):
        return {
            "step": self.step,
            "origin": self.origin,
            "offset_shifts": list(self.offset_shifts),
            "offset_residuals": list(self.offset_residuals),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["step"],
            data["origin"],
            tuple(data.get("offset_shifts", ())),
            tuple(data.get("offset_residuals", ())),
        )


@dataclass(frozen=True)
class StateSpace:
    """Inclusive integer interval ``[lo, hi]`` of total-drift states."""

    lo: int
    hi: int

    def __post_init__(self):
        lo, hi = int(self.lo), int(self.hi)
        if lo != self.lo or hi != self.hi:
            raise DriftGuardError("state-space bounds must be integers")
        if not lo <= 0 <= hi:
            raise DriftGuardError(f"state space [{lo}, {hi}] must contain the zero-drift state")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def __len__(self):
        return self.size

    def __contains__(self, state):
        return self.lo <= state <= self.hi

    @property
    def states(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def index(self, state: int) -> int:
        if state not in self:
            raise DriftGuardError(f"state {state} outside [{self.lo}, {self.hi}]")
        return int(state) - self.lo

    def unit(self, state: int = 0) -> np.ndarray:
        """Canonical vector with all mass on ``state`` (zero drift by default)."""
        vec = np.zeros(self.size)
        vec[self.index(state)] = 1.0
        return vec

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, data):
        return cls(data["lo"], data["hi"])


@dataclass(frozen=True, eq=False)
class LatticePmf:
    """Probability vector over consecutive integer states starting at ``lo``."""

    lo: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise DriftGuardError("pmf must be a non-empty vector")
        if np.any(probs < 0):
            raise DriftGuardError("pmf entries must be non-negative")
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "probs", frozen_array(probs))

    @property
    def hi(self) -> int:
        return self.lo + self.probs.size - 1

    @classmethod
    def from_samples(cls, samples) -> "LatticePmf":
        values = np.rint(np.asarray(samples, dtype=float)).astype(np.int64)
        lo = int(values.min())
        counts = np.bincount(values - lo)
        return cls(lo, counts / counts.sum())

    def __eq__(self, other):
        if not isinstance(other, LatticePmf):
            return NotImplemented
        return self.lo == other.lo and np.array_equal(self.probs, other.probs)

    def to_dict(self):
        return {"lo": self.lo, "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["lo"], np.array(data["probs"], dtype=float))
