# Models package
from .schemas import (
    # Enums
    Port,
    Mode,
    SweptParameter,
    FitModel,
    # Polarization
    SampleSpec,
    PhysicalSample,
    ProjectorSetting,
    AnalyzerConfig,
    PsaConfig,
    # Detection
    DetectionModel,
    SweepPlan,
    SweepRecord,
    DatasetMetadata,
    SweepDataset,
    # Estimation
    FitConfig,
    FitResult,
    SensitivityReport,
    AggregateSummary,
    # Characterization
    ChshSettings,
    VisibilityResult,
    ChshResult,
    # Experiments
    PhysicalSampleConfig,
    SampleConfig,
    SweepConfig,
    FitOptions,
    ExperimentConfig,
    FitCommandConfig,
    ChshSettingsConfig,
    CharacterizeConfig,
    Table1Sample,
    Table1Case,
    Table1Bundle,
    # HTTP
    FitRequest,
)

__all__ = [
    "Port",
    "Mode",
    "SweptParameter",
    "FitModel",
    "SampleSpec",
    "PhysicalSample",
    "ProjectorSetting",
    "AnalyzerConfig",
    "PsaConfig",
    "DetectionModel",
    "SweepPlan",
    "SweepRecord",
    "DatasetMetadata",
    "SweepDataset",
    "FitConfig",
    "FitResult",
    "SensitivityReport",
    "AggregateSummary",
    "ChshSettings",
    "VisibilityResult",
    "ChshResult",
    "PhysicalSampleConfig",
    "SampleConfig",
    "SweepConfig",
    "FitOptions",
    "ExperimentConfig",
    "FitCommandConfig",
    "ChshSettingsConfig",
    "CharacterizeConfig",
    "Table1Sample",
    "Table1Case",
    "Table1Bundle",
    "FitRequest",
]
