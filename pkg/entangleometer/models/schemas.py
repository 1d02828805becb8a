import math
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from entangleometer.config import SCHEMA_VERSION


def _finite(value: float) -> float:
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    return value


# ==================== Enums ====================

class Port(str, Enum):
    TRANSMITTED = "transmitted"
    REFLECTED = "reflected"


class Mode(str, Enum):
    QUANTUM = "quantum"
    CLASSICAL = "classical"


class SweptParameter(str, Enum):
    IDLER_HWP = "idler_hwp"
    ANALYZER = "analyzer"


class FitModel(str, Enum):
    NO_COMPENSATOR = "no_compensator"
    COMPENSATOR = "compensator"
    SENARMONT = "senarmont"
    CLASSICAL_PSA = "classical_psa"


# ==================== Polarization Schemas ====================

class SampleSpec(BaseModel):
    """Birefringent sample: slow-axis angle and retardance, radians"""
    model_config = ConfigDict(frozen=True)

    theta: float
    delta: float

    @field_validator("theta", "delta")
    @classmethod
    def check_finite(cls, value: float) -> float:
        return _finite(value)


class PhysicalSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    wavelength_nm: float = Field(..., gt=0)
    birefringence: float = Field(..., ge=0)
    thickness_nm: float = Field(..., ge=0)
    axis: float = 0.0


class ProjectorSetting(BaseModel):
    model_config = ConfigDict(frozen=True)

    hwp_angle: float
    port: Port = Port.TRANSMITTED


class AnalyzerConfig(BaseModel):
    """Joint analyzer; the compensator is a quarter-wave plate in the idler arm after the sample"""
    model_config = ConfigDict(frozen=True)

    signal: ProjectorSetting
    idler: ProjectorSetting
    compensator_present: bool = False
    compensator_angle: float = 0.0


class PsaConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    polarizer_angle: float
    analyzer_angle: float
    theta: float
    delta: float
    compensator_present: bool = False


# ==================== Detection Schemas ====================

class DetectionModel(BaseModel):
    """Count budget; rates in counts/s, times in s"""
    model_config = ConfigDict(frozen=True)

    pair_rate: float = Field(2.0e4, ge=0)
    efficiency_signal: float = Field(0.6, ge=0, le=1)
    efficiency_idler: float = Field(0.6, ge=0, le=1)
    dark_rate_signal: float = Field(360.0, ge=0)
    dark_rate_idler: float = Field(360.0, ge=0)
    coincidence_window: float = Field(1.0e-9, gt=0)
    integration_time: float = Field(10.0, gt=0)
    singles_rate_classical: float = Field(2.1e5, ge=0)
    shot_noise: bool = True
    include_accidentals: bool = True

    @classmethod
    def noiseless(cls, **overrides) -> "DetectionModel":
        """Expected counts only: no sampling, no darks, no accidentals"""
        values = dict(
            shot_noise=False,
            include_accidentals=False,
            dark_rate_signal=0.0,
            dark_rate_idler=0.0,
        )
        values.update(overrides)
        return cls(**values)


class SweepPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Mode = Mode.QUANTUM
    swept_parameter: SweptParameter = SweptParameter.IDLER_HWP
    angles: List[float] = Field(..., min_length=4)
    signal_hwp: float = 0.0
    polarizer_angle: float = 0.0
    compensator_present: bool = False
    compensator_angle: float = 0.0
    source_visibility: float = Field(1.0, ge=0, le=1)

    @field_validator("angles")
    @classmethod
    def check_angles(cls, angles: List[float]) -> List[float]:
        for angle in angles:
            _finite(angle)
        if len(set(angles)) < 4:
            raise ValueError("a sweep needs at least 4 distinct angles")
        return angles

    @model_validator(mode="after")
    def check_mode(self) -> "SweepPlan":
        expected = SweptParameter.IDLER_HWP if self.mode == Mode.QUANTUM else SweptParameter.ANALYZER
        if self.swept_parameter != expected:
            raise ValueError(f"{self.mode.value} sweeps rotate the {expected.value}")
        return self


class SweepRecord(BaseModel):
    angle_rad: float
    counts: float = Field(..., ge=0)
    integration_s: float = Field(..., gt=0)


class DatasetMetadata(BaseModel):
    schema_version: int = SCHEMA_VERSION
    seed: Optional[int] = None
    mode: Mode
    noise_free: bool
    plan: SweepPlan
    detection: DetectionModel
    ground_truth: Optional[SampleSpec] = None
    config_hash: Optional[str] = None


class SweepDataset(BaseModel):
    records: List[SweepRecord]
    metadata: DatasetMetadata

    def angles(self) -> np.ndarray:
        return np.array([record.angle_rad for record in self.records], dtype=float)

    def counts(self) -> np.ndarray:
        return np.array([record.counts for record in self.records], dtype=float)

    def integration(self) -> np.ndarray:
        return np.array([record.integration_s for record in self.records], dtype=float)


# ==================== Estimation Schemas ====================

class FitConfig(BaseModel):
    """Least-squares setup; fixed angles are (signal_hwp, theta) or (polarizer_angle, theta)"""
    model_config = ConfigDict(frozen=True)

    model: FitModel
    signal_hwp: float = 0.0
    theta: float = math.pi / 4
    polarizer_angle: float = 0.0
    compensator: bool = True
    initial_delta: Optional[float] = None
    initial_scale: Optional[float] = Field(None, gt=0)
    max_iterations: int = Field(400, ge=1)
    convergence_tol: float = Field(1e-12, gt=0)
    scale_perturbation: float = Field(0.02, ge=0, lt=1)
    perturbation_steps: int = Field(5, ge=2)
    multi_starts: int = Field(8, ge=1)
    poisson_weighting: bool = False
    dependence_factor: float = Field(10.0, gt=0)


class FitResult(BaseModel):
    schema_version: int = SCHEMA_VERSION
    model: FitModel
    delta_hat: float
    scale_hat: float
    residual_norm: float
    std_delta: Optional[float] = None
    std_scale: Optional[float] = None
    iterations: int
    converged: bool
    ambiguity: str


class SensitivityReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scale_anchors: List[float]
    delta_hats: List[float]
    spread: float = Field(..., ge=0)
    threshold: float
    dependent: bool
    failures: List[str] = []


class AggregateSummary(BaseModel):
    count: int
    delta_std: float
    mean_delta: float
    std_delta: float
    mean_relative_error: float
    std_relative_error: float
    mean_abs_relative_error: float
    max_abs_relative_error: float
    delta_cell: str
    relative_error_cell: str


# ==================== Characterization Schemas ====================

class ChshSettings(BaseModel):
    """Analyzer polarization angles in radians; HWP angles are half of these"""
    model_config = ConfigDict(frozen=True)

    a: float = 0.0
    a_prime: float = math.pi / 4
    b: float = math.pi / 8
    b_prime: float = 3 * math.pi / 8

    def pairs(self) -> list:
        return [(self.a, self.b), (self.a, self.b_prime), (self.a_prime, self.b), (self.a_prime, self.b_prime)]


class VisibilityResult(BaseModel):
    basis_label: str
    c_max: float
    c_min: float
    visibility: float
    visibility_std: Optional[float] = None


class ChshResult(BaseModel):
    settings: ChshSettings
    correlations: List[float]
    correlation_stds: List[float]
    counts: List[List[float]]
    s_value: float
    s_std: float


# ==================== Experiment Schemas ====================

class PhysicalSampleConfig(BaseModel):
    wavelength_nm: float = Field(..., gt=0)
    birefringence: float = Field(..., ge=0)
    thickness_nm: float = Field(..., ge=0)


class SampleConfig(BaseModel):
    theta_deg: float = 45.0
    delta: Optional[float] = None
    physical: Optional[PhysicalSampleConfig] = None

    @model_validator(mode="after")
    def check_source(self) -> "SampleConfig":
        if (self.delta is None) == (self.physical is None):
            raise ValueError("give exactly one of 'delta' or 'physical'")
        return self


class SweepConfig(BaseModel):
    start_deg: float = 0.0
    stop_deg: float = 180.0
    step_deg: float = Field(5.0, gt=0)
    angles_deg: Optional[List[float]] = None
    signal_hwp_deg: float = 0.0
    polarizer_deg: float = 0.0

    def angles_rad(self) -> List[float]:
        if self.angles_deg is not None:
            degrees = np.asarray(self.angles_deg, dtype=float)
        else:
            count = int(round((self.stop_deg - self.start_deg) / self.step_deg))
            degrees = self.start_deg + self.step_deg * np.arange(count)
        return [float(x) for x in np.deg2rad(degrees)]


class FitOptions(BaseModel):
    model: Optional[FitModel] = None
    initial_delta: Optional[float] = None
    initial_scale: Optional[float] = Field(None, gt=0)
    max_iterations: int = Field(400, ge=1)
    convergence_tol: float = Field(1e-12, gt=0)
    scale_perturbation: float = Field(0.02, ge=0, lt=1)
    perturbation_steps: int = Field(5, ge=2)
    multi_starts: int = Field(8, ge=1)
    poisson_weighting: bool = False
    dependence_factor: float = Field(10.0, gt=0)


class ExperimentConfig(BaseModel):
    mode: Mode = Mode.QUANTUM
    compensator: bool = False
    sample: SampleConfig
    sweep: SweepConfig = SweepConfig()
    detection: DetectionModel = DetectionModel()
    fit: FitOptions = FitOptions()
    repetitions: int = Field(1, ge=1)
    axis_schedule_deg: Optional[List[float]] = None
    seed: Optional[int] = Field(None, ge=0)
    source_visibility: float = Field(1.0, ge=0, le=1)
    delta_std: Optional[float] = Field(None, gt=0)
    override_validity: bool = False


class FitCommandConfig(BaseModel):
    """Fit geometry defaults to the dataset metadata; fields here override it"""
    fit: FitOptions = FitOptions()
    theta_deg: Optional[float] = None
    signal_hwp_deg: Optional[float] = None
    polarizer_deg: Optional[float] = None
    compensator: Optional[bool] = None
    delta_std: Optional[float] = Field(None, gt=0)


class ChshSettingsConfig(BaseModel):
    a_deg: float = 0.0
    a_prime_deg: float = 45.0
    b_deg: float = 22.5
    b_prime_deg: float = 67.5

    def to_settings(self) -> ChshSettings:
        a, a_prime, b, b_prime = np.deg2rad([self.a_deg, self.a_prime_deg, self.b_deg, self.b_prime_deg])
        return ChshSettings(a=float(a), a_prime=float(a_prime), b=float(b), b_prime=float(b_prime))


class CharacterizeConfig(BaseModel):
    source_visibility: float = Field(1.0, ge=0, le=1)
    detection: DetectionModel = DetectionModel()
    counts_per_setting: float = Field(1.0e4, gt=0)
    fringe_points: int = Field(36, ge=8)
    chsh: ChshSettingsConfig = ChshSettingsConfig()
    seed: Optional[int] = Field(None, ge=0)


class Table1Sample(BaseModel):
    label: str
    delta_std: float = Field(..., gt=0)
    delta_true: Optional[float] = None

    @property
    def truth(self) -> float:
        return self.delta_std if self.delta_true is None else self.delta_true


class Table1Case(BaseModel):
    label: str
    mode: Mode
    compensator: bool


def _default_cases() -> List[Table1Case]:
    return [
        Table1Case(label="Case 1: quantum without QWP", mode=Mode.QUANTUM, compensator=False),
        Table1Case(label="Case 2: quantum with QWP", mode=Mode.QUANTUM, compensator=True),
        Table1Case(label="Case 3: classical with QWP", mode=Mode.CLASSICAL, compensator=True),
    ]


def _default_samples() -> List[Table1Sample]:
    return [
        Table1Sample(label="HWP", delta_std=3.1341),
        Table1Sample(label="QWP", delta_std=1.56, delta_true=1.5522),
    ]


class Table1Bundle(BaseModel):
    cases: List[Table1Case] = Field(default_factory=_default_cases, min_length=1)
    samples: List[Table1Sample] = Field(default_factory=_default_samples, min_length=1)
    repetitions: int = Field(10, ge=2)
    nominal_theta_deg: float = 45.0
    axis_schedule_deg: List[float] = Field(default_factory=lambda: [float(x) for x in range(0, 180, 15)])
    sweep: SweepConfig = SweepConfig()
    detection: DetectionModel = DetectionModel()
    fit: FitOptions = FitOptions()
    source_visibility: float = Field(1.0, ge=0, le=1)
    seed: Optional[int] = Field(None, ge=0)


# ==================== HTTP Schemas ====================

class FitRequest(BaseModel):
    dataset: SweepDataset
    config: FitCommandConfig = FitCommandConfig()
    sensitivity: bool = False
    delta_std: Optional[float] = Field(None, gt=0)
