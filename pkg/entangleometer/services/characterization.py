"""
Characterization Service
Source-quality metrics: two-photon interference visibility, the CHSH
S-parameter with its Poisson error, state fidelity and 36-setting density
matrix tomography (linear inversion seed, maximum-likelihood refinement)
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import linalg

from entangleometer.config import SCHEMA_VERSION
from entangleometer.models.schemas import (
    AnalyzerConfig,
    ChshResult,
    ChshSettings,
    DetectionModel,
    Port,
    ProjectorSetting,
    SampleSpec,
    SweepDataset,
    SweepPlan,
    VisibilityResult,
)
from entangleometer.services.biphoton import (
    BiphotonDensity,
    BiphotonState,
    StateLike,
    as_density,
    bell_phi_plus,
    coincidence_probability,
)
from entangleometer.services.detection import derive_seed, run_sweep, sample_counts
from entangleometer.services.errors import (
    DegenerateSweepException,
    IllConditionedException,
    InsufficientDataException,
    InvalidConfigException,
)
from entangleometer.services.estimation import fit_sinusoid

logger = logging.getLogger(__name__)

CHSH_STREAM = 1
TOMOGRAPHY_STREAM = 2

MIN_FRINGE_POINTS = 8
SEED_MIXING = 1e-8
MLE_TOL = 1e-10
MLE_MAX_ITERATIONS = 5000
MLE_MIN_STEP = 1e-6
EIGENVALUE_FLOOR = 1e-12

TOMOGRAPHY_COLUMNS = ["basis_signal", "basis_idler", "counts"]

_SQRT_HALF = 1.0 / np.sqrt(2.0)
SINGLE_PHOTON_STATES: Dict[str, np.ndarray] = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_SQRT_HALF, _SQRT_HALF], dtype=complex),
    "A": np.array([_SQRT_HALF, -_SQRT_HALF], dtype=complex),
    "R": np.array([_SQRT_HALF, -1j * _SQRT_HALF], dtype=complex),
    "L": np.array([_SQRT_HALF, 1j * _SQRT_HALF], dtype=complex),
}
MEASUREMENT_BASES = (("H", "V"), ("D", "A"), ("R", "L"))
BASIS_OF = {label: index for index, pair in enumerate(MEASUREMENT_BASES) for label in pair}

_PAULI = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
]
TWO_QUBIT_PAULI = np.array([np.kron(a, b) for a in _PAULI for b in _PAULI])


# ==================== Visibility ====================

def visibility(curve: SweepDataset, basis_label: str = "H") -> VisibilityResult:
    """
    Fringe contrast from a fitted sinusoid in 4 h_i

    Background counts stay in; V = amplitude / offset of the fit.
    """
    angles, counts = curve.angles(), curve.counts()
    if len(angles) < MIN_FRINGE_POINTS:
        raise InsufficientDataException(len(angles), MIN_FRINGE_POINTS)

    coefficients, covariance, _ = fit_sinusoid(angles, counts)
    offset, c1, c2 = coefficients
    amplitude = float(np.hypot(c1, c2))
    if offset <= 0:
        raise DegenerateSweepException("fitted fringe offset is not positive")

    amplitude_std = 0.0
    value_std = None
    if amplitude > 0:
        amplitude_grad = np.array([0.0, c1, c2]) / amplitude
        amplitude_std = float(np.sqrt(max(amplitude_grad @ covariance @ amplitude_grad, 0.0)))
        value_grad = np.array([-amplitude / offset ** 2, c1 / (amplitude * offset), c2 / (amplitude * offset)])
        value_std = float(np.sqrt(max(value_grad @ covariance @ value_grad, 0.0)))
    if amplitude <= max(3.0 * amplitude_std, 1e-12 * offset):
        raise DegenerateSweepException("fitted fringe amplitude is consistent with zero")

    c_max = float(offset + amplitude)
    c_min = float(max(offset - amplitude, 0.0))
    return VisibilityResult(
        basis_label=basis_label,
        c_max=c_max,
        c_min=c_min,
        visibility=float((c_max - c_min) / (c_max + c_min)),
        visibility_std=value_std,
    )


# ==================== CHSH ====================

def chsh(
    rho: StateLike,
    settings: ChshSettings = ChshSettings(),
    counts_per_setting: float = 1.0e4,
    seed: Optional[int] = None,
) -> ChshResult:
    """
    CHSH S-parameter from simulated coincidence counts

    Each analyzer setting pair collects counts_per_setting coincidences split
    over its four port combinations. Without a seed the expected counts are
    used. S = |E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|.
    """
    if counts_per_setting <= 0:
        raise InvalidConfigException("counts_per_setting must be positive")
    rho = as_density(rho)
    ports = (Port.TRANSMITTED, Port.REFLECTED)

    correlations, stds, table = [], [], []
    for pair_index, (alpha, beta) in enumerate(settings.pairs()):
        means = []
        for port_s, port_i in itertools.product(ports, ports):
            config = AnalyzerConfig(
                signal=ProjectorSetting(hwp_angle=alpha / 2, port=port_s),
                idler=ProjectorSetting(hwp_angle=beta / 2, port=port_i),
            )
            means.append(counts_per_setting * coincidence_probability(rho, config))
        means = np.array(means)
        if seed is None:
            counts = means
        else:
            counts = np.asarray(sample_counts(means, derive_seed(seed, pair_index), stream=CHSH_STREAM), dtype=float)

        total = float(counts.sum())
        if total <= 0:
            raise DegenerateSweepException(f"no coincidences recorded for setting pair {pair_index}")
        # order: ++, +-, -+, --
        correlation = float((counts[0] + counts[3] - counts[1] - counts[2]) / total)
        correlations.append(correlation)
        stds.append(float(np.sqrt(max(1.0 - correlation ** 2, 0.0) / total)))
        table.append([float(c) for c in counts])

    e_ab, e_abp, e_apb, e_apbp = correlations
    s_value = abs(e_ab - e_abp) + abs(e_apb + e_apbp)
    return ChshResult(
        settings=settings,
        correlations=correlations,
        correlation_stds=stds,
        counts=table,
        s_value=float(s_value),
        s_std=float(np.sqrt(np.sum(np.square(stds)))),
    )


# ==================== Fidelity ====================

def fidelity(rho: StateLike, target: BiphotonState) -> float:
    """<psi|rho|psi> for a pure target"""
    matrix = as_density(rho).matrix
    psi = target.amplitudes
    value = float(np.real(np.vdot(psi, matrix @ psi)))
    return min(max(value, 0.0), 1.0)


def _floored_sqrt(values: np.ndarray) -> np.ndarray:
    # eigenvalues at round-off level count as zero
    return np.sqrt(np.where(values > EIGENVALUE_FLOOR, values, 0.0))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh((matrix + matrix.conj().T) / 2)
    return (vectors * _floored_sqrt(values)) @ vectors.conj().T


def state_fidelity(rho: StateLike, sigma: StateLike) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2"""
    root = _psd_sqrt(as_density(rho).matrix)
    inner = root @ as_density(sigma).matrix @ root
    values = linalg.eigvalsh((inner + inner.conj().T) / 2)
    value = float(np.sum(_floored_sqrt(values)) ** 2)
    return min(max(value, 0.0), 1.0)


# ==================== Tomography ====================

@dataclass(frozen=True, eq=False)
class TomographyResult:
    rho: BiphotonDensity
    fidelity_to_target: float
    log_likelihood: float
    iterations: int
    linear_rho: BiphotonDensity = field(repr=False, default=None)


def tomography_projectors() -> List[tuple]:
    """(signal label, idler label, 4x4 projector) for the 36 joint projections"""
    projectors = []
    for label_s, label_i in itertools.product(SINGLE_PHOTON_STATES, SINGLE_PHOTON_STATES):
        joint = np.kron(SINGLE_PHOTON_STATES[label_s], SINGLE_PHOTON_STATES[label_i])
        projectors.append((label_s, label_i, np.outer(joint, joint.conj())))
    return projectors


def simulate_tomography_counts(rho: StateLike, counts_per_setting: float, seed: Optional[int] = None) -> pd.DataFrame:
    """
    36-setting count table for a state

    counts_per_setting pairs reach the analyzers while each projector setting
    is in place, so projection P has mean counts_per_setting * tr(P rho) and
    the four projections of one basis pair (HV, DA, RL per arm) sum to
    counts_per_setting. Without a seed the expected counts are returned.
    """
    if counts_per_setting <= 0:
        raise InvalidConfigException("counts_per_setting must be positive")
    matrix = as_density(rho).matrix
    rows = []
    for index, (label_s, label_i, projector) in enumerate(tomography_projectors()):
        mean = counts_per_setting * max(float(np.real(np.trace(projector @ matrix))), 0.0)
        counts = float(mean) if seed is None else sample_counts(mean, seed, index, stream=TOMOGRAPHY_STREAM)
        rows.append({"basis_signal": label_s, "basis_idler": label_i, "counts": counts})
    return pd.DataFrame(rows, columns=TOMOGRAPHY_COLUMNS)


def _parse_table(table: pd.DataFrame):
    if list(table.columns) != TOMOGRAPHY_COLUMNS:
        raise InvalidConfigException(f"expected columns {TOMOGRAPHY_COLUMNS}, found {list(table.columns)}")
    unknown = set(table["basis_signal"]).union(table["basis_idler"]) - set(SINGLE_PHOTON_STATES)
    if unknown:
        raise InvalidConfigException(f"unknown projection labels {sorted(unknown)}")
    if table.duplicated(subset=["basis_signal", "basis_idler"]).any():
        raise InvalidConfigException("duplicate projections in count table")
    counts = table["counts"].to_numpy(dtype=float)
    if not np.all(np.isfinite(counts)) or np.any(counts < 0):
        raise InvalidConfigException("counts must be finite and non-negative")

    projectors = np.array([
        np.outer(joint, joint.conj())
        for joint in (
            np.kron(SINGLE_PHOTON_STATES[s], SINGLE_PHOTON_STATES[i])
            for s, i in zip(table["basis_signal"], table["basis_idler"])
        )
    ])
    groups = np.array([
        3 * BASIS_OF[s] + BASIS_OF[i] for s, i in zip(table["basis_signal"], table["basis_idler"])
    ])
    totals = np.array([counts[groups == g].sum() for g in groups])
    if np.any(totals <= 0):
        raise IllConditionedException("a measured basis pair recorded no counts")
    return projectors, counts, totals


def _linear_inversion(projectors: np.ndarray, frequencies: np.ndarray) -> np.ndarray:
    """Pauli-basis least squares seed, clipped to the physical cone"""
    design = np.real(np.einsum("jab,kba->jk", projectors, TWO_QUBIT_PAULI)) / 4.0
    if np.linalg.matrix_rank(design) < 16:
        raise IllConditionedException("projections do not span the two-qubit operator space")
    coefficients, *_ = np.linalg.lstsq(design, frequencies, rcond=None)
    estimate = np.einsum("k,kab->ab", coefficients, TWO_QUBIT_PAULI) / 4.0
    estimate = (estimate + estimate.conj().T) / 2

    values, vectors = linalg.eigh(estimate)
    values = np.clip(values, 0.0, None)
    if values.sum() <= 0:
        raise IllConditionedException("linear inversion produced no positive weight")
    estimate = (vectors * (values / values.sum())) @ vectors.conj().T
    return (1.0 - SEED_MIXING) * estimate + SEED_MIXING * np.eye(4) / 4.0


def _probabilities(projectors: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("jab,ba->j", projectors, rho))


def _log_likelihood(counts: np.ndarray, probabilities: np.ndarray) -> float:
    observed = counts > 0
    return float(np.sum(counts[observed] * np.log(np.maximum(probabilities[observed], 1e-300))))


def tomography(table: pd.DataFrame, target: BiphotonState = None) -> TomographyResult:
    """
    Maximum-likelihood two-photon state from a projection count table

    Linear inversion seeds a diluted R rho R fixed-point iteration; the step
    is halved whenever it would lower the Poisson log-likelihood. Stops when
    the improvement drops below 1e-10 or after 5000 iterations.
    """
    projectors, counts, totals = _parse_table(table)
    seed_rho = _linear_inversion(projectors, counts / totals)

    grand_total = counts.sum()
    identity = np.eye(4)
    rho = seed_rho
    likelihood = _log_likelihood(counts, _probabilities(projectors, rho))
    step = 1.0
    iterations = 0
    while iterations < MLE_MAX_ITERATIONS:
        iterations += 1
        probabilities = np.maximum(_probabilities(projectors, rho), 1e-300)
        weights = np.where(counts > 0, counts / probabilities, 0.0) / grand_total
        operator = np.einsum("j,jab->ab", weights, projectors)

        while True:
            mixer = identity + step * (operator - identity)
            candidate = mixer @ rho @ mixer.conj().T
            candidate = candidate / np.real(np.trace(candidate))
            candidate_likelihood = _log_likelihood(counts, _probabilities(projectors, candidate))
            if candidate_likelihood >= likelihood or step <= MLE_MIN_STEP:
                break
            step /= 2

        improvement = candidate_likelihood - likelihood
        if improvement < 0:
            break
        rho, likelihood = (candidate + candidate.conj().T) / 2, candidate_likelihood
        step = min(1.0, 2 * step)
        if improvement < MLE_TOL:
            break
    else:
        logger.warning("⚠️ Tomography stopped at the iteration limit (%d)", MLE_MAX_ITERATIONS)

    estimate = BiphotonDensity(rho)
    return TomographyResult(
        rho=estimate,
        fidelity_to_target=fidelity(estimate, target if target is not None else bell_phi_plus()),
        log_likelihood=likelihood,
        iterations=iterations,
        linear_rho=BiphotonDensity(seed_rho),
    )


def rho_to_json(rho: StateLike) -> dict:
    """16 row-major entries as [re, im] pairs plus separate real and imaginary parts"""
    matrix = as_density(rho).matrix
    return {
        "schema_version": SCHEMA_VERSION,
        "basis": ["HH", "HV", "VH", "VV"],
        "entries": [[float(z.real), float(z.imag)] for z in matrix.reshape(16)],
        "real": np.real(matrix).tolist(),
        "imag": np.imag(matrix).tolist(),
    }


# ==================== Suite ====================

@dataclass(frozen=True, eq=False)
class CharacterizationReport:
    fringe_h: SweepDataset
    fringe_d: SweepDataset
    visibility_h: VisibilityResult
    visibility_d: VisibilityResult
    chsh: ChshResult
    tomography_counts: pd.DataFrame
    tomography: TomographyResult


def fringe_plan(signal_hwp: float, points: int) -> SweepPlan:
    """Idler HWP over one full fringe period [0, pi/2)"""
    angles = np.linspace(0.0, np.pi / 2, points, endpoint=False)
    return SweepPlan(angles=[float(a) for a in angles], signal_hwp=signal_hwp)


def simulate_characterization(
    rho: StateLike,
    model: DetectionModel,
    seed: Optional[int] = None,
    counts_per_setting: float = 1.0e4,
    settings: ChshSettings = ChshSettings(),
    fringe_points: int = 36,
) -> CharacterizationReport:
    """
    One-call source characterization

    H-base (h_s = 0) and D-base (h_s = 22.5 deg) fringes use the detection
    model's count budget; CHSH and tomography use counts_per_setting. With
    shot noise off every table holds expected counts.
    """
    rho = as_density(rho).validate(1e-8)
    noisy = model.shot_noise
    if noisy and seed is None:
        raise InvalidConfigException("a seed is required when shot noise is enabled")
    # no sample in the beam: fringes probe the source alone
    identity_sample = SampleSpec(theta=0.0, delta=0.0)

    fringes = {}
    for stream, (label, signal_hwp) in enumerate((("H", 0.0), ("D", np.pi / 8))):
        fringes[label] = run_sweep(
            fringe_plan(signal_hwp, fringe_points),
            identity_sample,
            model,
            seed=derive_seed(seed, stream) if noisy else seed,
            override_validity=True,
            source=rho,
        )

    chsh_result = chsh(rho, settings, counts_per_setting, seed if noisy else None)
    table = simulate_tomography_counts(rho, counts_per_setting, seed if noisy else None)
    result = tomography(table)
    visibility_h = visibility(fringes["H"], "H")
    visibility_d = visibility(fringes["D"], "D")
    logger.info(
        "Characterization: V_H=%.4f V_D=%.4f S=%.4f F=%.4f",
        visibility_h.visibility,
        visibility_d.visibility,
        chsh_result.s_value,
        result.fidelity_to_target,
    )
    return CharacterizationReport(
        fringe_h=fringes["H"],
        fringe_d=fringes["D"],
        visibility_h=visibility_h,
        visibility_d=visibility_d,
        chsh=chsh_result,
        tomography_counts=table,
        tomography=result,
    )
