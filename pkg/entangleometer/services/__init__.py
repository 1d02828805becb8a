# Services package
"""
Domain services for the entangleometer simulator

Modules:
- polcore: Jones-calculus primitives and angle helpers
- biphoton: two-photon states, coincidence probabilities and closed-form models
- classical_psa: Polarizer-Sample-Analyzer transmission ellipsometer
- detection: count budget, seeded Poisson sampling and dataset files
- estimation: least-squares retardance fits, Senarmont reading, sensitivity scans
- characterization: visibility, CHSH, fidelity and tomography
- experiment_service: command orchestration for the CLI and the HTTP surface
- errors: exception hierarchy with exit codes
"""

from .errors import (
    EntangleometerException,
    InvalidConfigException,
    InvalidSweepException,
    NonUnitaryOperatorException,
    DegenerateSweepException,
    InsufficientDataException,
    IllConditionedException,
    NonConvergenceException,
)

from .biphoton import (
    BiphotonState,
    BiphotonDensity,
    bell_phi_plus,
    depolarize,
    apply_local,
    coincidence_probability,
    oracle_probability,
    sweep_validity,
)

from .detection import (
    expected_coincidences,
    run_sweep,
    save_dataset,
    load_dataset,
)

from .estimation import (
    fit_retardance,
    senarmont_estimate,
    sensitivity_scan,
    relative_error,
    aggregate,
)

from .characterization import (
    TomographyResult,
    visibility,
    chsh,
    fidelity,
    tomography,
    simulate_characterization,
)

from .experiment_service import (
    CommandOutput,
    ExperimentService,
    experiment_service,
    config_hash,
    format_table1,
)

__all__ = [
    # Errors
    "EntangleometerException",
    "InvalidConfigException",
    "InvalidSweepException",
    "NonUnitaryOperatorException",
    "DegenerateSweepException",
    "InsufficientDataException",
    "IllConditionedException",
    "NonConvergenceException",
    # Biphoton
    "BiphotonState",
    "BiphotonDensity",
    "bell_phi_plus",
    "depolarize",
    "apply_local",
    "coincidence_probability",
    "oracle_probability",
    "sweep_validity",
    # Detection
    "expected_coincidences",
    "run_sweep",
    "save_dataset",
    "load_dataset",
    # Estimation
    "fit_retardance",
    "senarmont_estimate",
    "sensitivity_scan",
    "relative_error",
    "aggregate",
    # Characterization
    "TomographyResult",
    "visibility",
    "chsh",
    "fidelity",
    "tomography",
    "simulate_characterization",
    # Experiments
    "CommandOutput",
    "ExperimentService",
    "experiment_service",
    "config_hash",
    "format_table1",
]
