"""Lifetime drift modeling and guard-band optimization for discrete parameters."""

__version__ = "0.1.0"

from .data_model import (  # noqa: E402
    LatticePmf,
    NormalizationMeta,
    ReadoutSchedule,
    StateSpace,
    TrajectoryPanel,
    UnitSpace,
)
from .drift_model import (  # noqa: E402
    DriftChain,
    KernelShape,
    KernelSpec,
    PoolingMode,
    StepFit,
    TransitionMatrix,
    fit_chain,
    propagate,
)
from .errors import DriftGuardError  # noqa: E402
from .guardband import (  # noqa: E402
    GuardBandResult,
    LimitSpec,
    QualityTarget,
    Sidedness,
    optimize,
    optimize_with_initial,
    survival_profile,
    survive_probability,
)
from .kernels import BACKEND  # noqa: E402
from .oracle import enumerate_paths, mc_exceedance  # noqa: E402
from .preprocess import (  # noqa: E402
    OffsetEstimator,
    correct_tester_offset,
    detect_quantization,
    normalize_panels,
)
from .simulate import (  # noqa: E402
    PatternKind,
    PatternSpec,
    generate_pattern,
    sample_trajectories,
    validate_roundtrip,
)

__all__ = [
    "BACKEND",
    "DriftChain",
    "DriftGuardError",
    "GuardBandResult",
    "KernelShape",
    "KernelSpec",
    "LatticePmf",
    "LimitSpec",
    "NormalizationMeta",
    "OffsetEstimator",
    "PatternKind",
    "PatternSpec",
    "PoolingMode",
    "QualityTarget",
    "ReadoutSchedule",
    "Sidedness",
    "StateSpace",
    "StepFit",
    "TrajectoryPanel",
    "TransitionMatrix",
    "UnitSpace",
    "correct_tester_offset",
    "detect_quantization",
    "enumerate_paths",
    "fit_chain",
    "generate_pattern",
    "mc_exceedance",
    "normalize_panels",
    "optimize",
    "optimize_with_initial",
    "propagate",
    "sample_trajectories",
    "survival_profile",
    "survive_probability",
    "validate_roundtrip",
]
