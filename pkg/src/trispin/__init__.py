"""Monte Carlo simulator and analytics for a driven three-level spin qubit.

The package models a spin-1 system whose |+1> and |-1> levels are dressed
by continuous multi-tone driving into bright/dark superpositions, under
Ornstein-Uhlenbeck magnetic-field noise and drive-amplitude noise.  It
provides exact-step trajectory propagation, closed-form dephasing
envelopes, perturbative and numeric Stark-shift analysis, a robust
detuning search, and a config-driven command line front end.
"""

__version__ = "0.1.0"

from .exceptions import (
    AmbiguousSpectrumError,
    ConfigError,
    NumericalError,
    ResonanceError,
    RobustPointError,
    ThresholdNotCrossed,
    TrispinError,
)
from .envelopes import (
    THRESHOLD,
    EnvelopeParams,
    T2Estimate,
    extract_t2,
    fg_envelope,
    p_omega,
    p_total,
    pure_dephasing,
)
from .hamiltonians import GateParams, SensingParams, SystemParams, Tier
from .noise import DriveNoiseParams, OUParams, diffusion_from_t2star, ou_paths, psd
from .operators import (
    BARE,
    DRESSED,
    OperatorMatrix,
    RobustnessReport,
    StateVector,
    from_dressed,
    hermitian_unitary_step,
    spin1_operators,
    to_dressed,
    verify_robust_conditions,
)
from .propagate import (
    DEFAULT_SEED,
    EnsembleResult,
    PropagationConfig,
    PropagationPlan,
    cross_validate_tiers,
    preset_adiabatic_oracle,
    preset_gate,
    preset_nv_full,
    preset_sensing_raman,
    preset_tls_dephasing,
    propagate_trajectory,
    run_ensemble,
    sensing_contrast_scan,
)
from .stark import (
    DEFAULT_T2_TABLE_ROWS,
    DephasingBudget,
    StarkShifts,
    T2TableRow,
    dephasing_budget,
    find_robust_point,
    gap_maps,
    lower_bound_t2_table,
    numeric_gaps,
    residual_sz_mixing,
    second_order_delta2,
    second_order_shifts,
)

__all__ = [
    "__version__",
    "TrispinError",
    "ConfigError",
    "NumericalError",
    "ResonanceError",
    "RobustPointError",
    "AmbiguousSpectrumError",
    "ThresholdNotCrossed",
    "BARE",
    "DRESSED",
    "StateVector",
    "OperatorMatrix",
    "RobustnessReport",
    "spin1_operators",
    "to_dressed",
    "from_dressed",
    "hermitian_unitary_step",
    "verify_robust_conditions",
    "Tier",
    "SystemParams",
    "GateParams",
    "SensingParams",
    "OUParams",
    "DriveNoiseParams",
    "diffusion_from_t2star",
    "ou_paths",
    "psd",
    "EnvelopeParams",
    "T2Estimate",
    "THRESHOLD",
    "fg_envelope",
    "p_omega",
    "p_total",
    "pure_dephasing",
    "extract_t2",
    "DEFAULT_SEED",
    "PropagationConfig",
    "PropagationPlan",
    "EnsembleResult",
    "run_ensemble",
    "propagate_trajectory",
    "preset_tls_dephasing",
    "preset_adiabatic_oracle",
    "preset_nv_full",
    "preset_gate",
    "preset_sensing_raman",
    "sensing_contrast_scan",
    "cross_validate_tiers",
    "StarkShifts",
    "DephasingBudget",
    "T2TableRow",
    "DEFAULT_T2_TABLE_ROWS",
    "second_order_shifts",
    "second_order_delta2",
    "numeric_gaps",
    "find_robust_point",
    "residual_sz_mixing",
    "dephasing_budget",
    "gap_maps",
    "lower_bound_t2_table",
]
