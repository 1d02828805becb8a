"""
Detection Service
Maps ideal probabilities to expected and sampled photon counts and
generates seeded sweep datasets with CSV + JSON sidecar persistence
"""
import json
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from entangleometer.config import SCHEMA_VERSION
from entangleometer.models.schemas import (
    AnalyzerConfig,
    DatasetMetadata,
    DetectionModel,
    Mode,
    ProjectorSetting,
    PsaConfig,
    SampleSpec,
    SweepDataset,
    SweepPlan,
    SweepRecord,
)
from entangleometer.services.biphoton import (
    BiphotonDensity,
    bell_phi_plus,
    coincidence_probability,
    depolarize,
    sweep_validity,
    through_sample,
)
from entangleometer.services.classical_psa import classical_validity, psa_intensity
from entangleometer.services.errors import InvalidConfigException, InvalidSweepException

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["angle_rad", "counts", "integration_s"]
PROBABILITY_TOL = 1e-12

# stream ids keep sweeps, CHSH tables and tomography tables on disjoint RNG streams
SWEEP_STREAM = 0


# ==================== Count Budget ====================

def accidental_rate(singles_signal: float, singles_idler: float, window: float) -> float:
    """R_s R_i tau"""
    return singles_signal * singles_idler * window


def singles_rates(model: DetectionModel) -> Tuple[float, float]:
    """Detected singles per arm; each photon reaches a given port with probability 1/2"""
    return (
        model.pair_rate * model.efficiency_signal * 0.5 + model.dark_rate_signal,
        model.pair_rate * model.efficiency_idler * 0.5 + model.dark_rate_idler,
    )


def expected_coincidences(p, model: DetectionModel):
    """pair_rate eta_s eta_i p T + accidentals T"""
    p = np.asarray(p, dtype=float)
    if np.any(p < -PROBABILITY_TOL) or np.any(p > 1 + PROBABILITY_TOL):
        raise InvalidConfigException("coincidence probability must lie in [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    true_rate = model.pair_rate * model.efficiency_signal * model.efficiency_idler * p
    background = accidental_rate(*singles_rates(model), model.coincidence_window) if model.include_accidentals else 0.0
    mean = (true_rate + background) * model.integration_time
    return float(mean) if mean.ndim == 0 else mean


def expected_classical_counts(intensity, model: DetectionModel):
    """Analyzer-arm counts in classical mode: singles scale times intensity plus darks"""
    intensity = np.asarray(intensity, dtype=float)
    if np.any(intensity < -PROBABILITY_TOL) or np.any(intensity > 1 + PROBABILITY_TOL):
        raise InvalidConfigException("intensity fraction must lie in [0, 1]")
    intensity = np.clip(intensity, 0.0, 1.0)
    mean = (model.singles_rate_classical * intensity + model.dark_rate_idler) * model.integration_time
    return float(mean) if mean.ndim == 0 else mean


# ==================== Random Streams ====================

def record_rng(seed: int, index: int, stream: int = SWEEP_STREAM) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream, index); independent of evaluation order"""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic child seed for nested runs (repetitions, sample axes, table cells)"""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def sample_counts(mean, seed: int, index: int = 0, stream: int = SWEEP_STREAM):
    """Poisson variate(s) for the given mean(s), deterministic per (seed, stream, index)"""
    mean = np.asarray(mean, dtype=float)
    if np.any(mean < 0):
        raise InvalidConfigException("Poisson mean must be non-negative")
    counts = np.asarray(record_rng(seed, index, stream).poisson(mean))
    return int(counts) if counts.ndim == 0 else counts


# ==================== Sweeps ====================

def _check_plan_validity(plan: SweepPlan, sample: SampleSpec) -> None:
    if plan.mode == Mode.QUANTUM:
        if not sweep_validity(plan.signal_hwp, sample.theta):
            raise InvalidSweepException(plan.signal_hwp, sample.theta)
    elif not classical_validity(plan.polarizer_angle, sample.theta):
        raise InvalidSweepException((np.pi / 2 - plan.polarizer_angle) / 2, sample.theta)


def expected_sweep(plan: SweepPlan, sample: SampleSpec, model: DetectionModel, source: BiphotonDensity = None) -> np.ndarray:
    """Mean counts per plan angle, before sampling"""
    if plan.mode == Mode.CLASSICAL:
        intensities = [
            psa_intensity(PsaConfig(
                polarizer_angle=plan.polarizer_angle,
                analyzer_angle=angle,
                theta=sample.theta,
                delta=sample.delta,
                compensator_present=plan.compensator_present,
            ))
            for angle in plan.angles
        ]
        return np.asarray(expected_classical_counts(np.array(intensities), model), dtype=float)

    if source is None:
        source = depolarize(bell_phi_plus(), plan.source_visibility)
    evolved = through_sample(source, sample)
    probabilities = [
        coincidence_probability(evolved, AnalyzerConfig(
            signal=ProjectorSetting(hwp_angle=plan.signal_hwp),
            idler=ProjectorSetting(hwp_angle=angle),
            compensator_present=plan.compensator_present,
            compensator_angle=plan.compensator_angle,
        ))
        for angle in plan.angles
    ]
    return np.asarray(expected_coincidences(np.array(probabilities), model), dtype=float)


def run_sweep(
    plan: SweepPlan,
    sample: SampleSpec,
    model: DetectionModel,
    seed: Optional[int] = None,
    override_validity: bool = False,
    source: BiphotonDensity = None,
    config_hash: Optional[str] = None,
) -> SweepDataset:
    """
    Simulate one sweep

    Args:
        plan: angles and fixed analyzer/PSA settings
        sample: ground-truth sample (theta, delta)
        model: count budget; shot_noise=False returns the means themselves
        seed: RNG seed; record k draws from stream (seed, k)
        override_validity: allow sweeps that cannot depend on delta
        source: two-photon state before the sample (defaults to phi+ depolarized
            to plan.source_visibility)

    Returns:
        SweepDataset with ground truth recorded in the metadata
    """
    if not override_validity:
        _check_plan_validity(plan, sample)
    if model.shot_noise and seed is None:
        raise InvalidConfigException("a seed is required when shot noise is enabled")

    means = expected_sweep(plan, sample, model, source)
    if model.shot_noise:
        counts = [sample_counts(mean, seed, index) for index, mean in enumerate(means)]
    else:
        counts = [float(mean) for mean in means]

    records = [
        SweepRecord(angle_rad=float(angle), counts=count, integration_s=model.integration_time)
        for angle, count in zip(plan.angles, counts)
    ]
    metadata = DatasetMetadata(
        seed=seed,
        mode=plan.mode,
        noise_free=not model.shot_noise,
        plan=plan,
        detection=model,
        ground_truth=sample,
        config_hash=config_hash,
    )
    logger.debug("Simulated %s sweep with %d records (seed=%s)", plan.mode.value, len(records), seed)
    return SweepDataset(records=records, metadata=metadata)


# ==================== Persistence ====================

def sidecar_path(csv_path: Union[str, Path]) -> Path:
    return Path(csv_path).with_suffix(".json")


def dataset_frame(dataset: SweepDataset) -> pd.DataFrame:
    frame = pd.DataFrame({
        "angle_rad": dataset.angles(),
        "counts": dataset.counts(),
        "integration_s": dataset.integration(),
    })
    if not dataset.metadata.noise_free:
        frame["counts"] = frame["counts"].astype("int64")
    return frame


def write_json(path: Union[str, Path], payload: dict) -> Path:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline"""
    path = Path(path)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def write_csv(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def save_dataset(dataset: SweepDataset, csv_path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write `angle_rad,counts,integration_s` CSV plus the JSON metadata sidecar"""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(csv_path, dataset_frame(dataset))
    json_path = write_json(sidecar_path(csv_path), dataset.metadata.model_dump(mode="json"))
    return csv_path, json_path


def load_dataset(csv_path: Union[str, Path]) -> SweepDataset:
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise InvalidConfigException(f"dataset not found: {csv_path}")
    try:
        frame = pd.read_csv(csv_path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InvalidConfigException(f"cannot parse {csv_path.name}: {e}")
    if list(frame.columns) != CSV_COLUMNS:
        raise InvalidConfigException(f"expected columns {CSV_COLUMNS}, found {list(frame.columns)}")

    json_path = sidecar_path(csv_path)
    if not json_path.exists():
        raise InvalidConfigException(f"metadata sidecar not found: {json_path}")
    try:
        metadata = DatasetMetadata.model_validate_json(json_path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise InvalidConfigException(f"invalid metadata sidecar {json_path.name}: {e}")
    if metadata.schema_version != SCHEMA_VERSION:
        raise InvalidConfigException(f"unsupported schema_version {metadata.schema_version}")

    records = [
        SweepRecord(angle_rad=float(row.angle_rad), counts=float(row.counts), integration_s=float(row.integration_s))
        for row in frame.itertuples(index=False)
    ]
    return SweepDataset(records=records, metadata=metadata)
