"""
Biphoton Service
Two-photon polarization states, local evolution through sample and
compensator, joint projective coincidence probabilities and the closed-form
coincidence models with their retardance derivatives

Basis order is (HH, HV, VH, VV) with the signal photon as the left tensor
factor.
"""
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from entangleometer.models.schemas import AnalyzerConfig, Port, ProjectorSetting, SampleSpec
from entangleometer.services.errors import InvalidConfigException, NonUnitaryOperatorException
from entangleometer.services.polcore import (
    is_unitary,
    qwp,
    retarder,
    unitarity_deviation,
    wrapped_distance,
)

logger = logging.getLogger(__name__)

# Closed-form fraction = scale x coincidence probability
NO_COMPENSATOR_SCALE = 2.0
COMPENSATOR_SCALE = 1.0
SENARMONT_SCALE = 1.0

VALIDITY_TOL = 1e-9
IDENTITY_2 = np.eye(2, dtype=complex)


# ==================== State Types ====================

@dataclass(frozen=True, eq=False)
class BiphotonState:
    """Pure two-photon polarization state; construction normalizes"""
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        norm = np.linalg.norm(amplitudes)
        if norm == 0:
            raise InvalidConfigException("state vector has zero norm")
        object.__setattr__(self, "amplitudes", amplitudes / norm)

    def density(self) -> "BiphotonDensity":
        return BiphotonDensity(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class BiphotonDensity:
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (4, 4):
            raise InvalidConfigException(f"density matrix must be 4x4, got {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2)

    def is_valid(self, tol: float = 1e-10) -> bool:
        hermitian = np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol
        unit_trace = abs(np.trace(self.matrix) - 1.0) <= tol
        return bool(hermitian and unit_trace and self.eigenvalues.min() >= -1e-9)

    def validate(self, tol: float = 1e-10) -> "BiphotonDensity":
        if not self.is_valid(tol):
            raise InvalidConfigException("matrix is not a valid density matrix")
        return self


StateLike = Union[BiphotonState, BiphotonDensity]


def as_density(state: StateLike) -> BiphotonDensity:
    return state.density() if isinstance(state, BiphotonState) else state


# ==================== State Preparation and Evolution ====================

def bell_phi_plus() -> BiphotonState:
    """(|HV> + |VH>)/sqrt(2), labelled phi+ throughout"""
    return BiphotonState(np.array([0.0, 1.0, 1.0, 0.0]) / np.sqrt(2.0))


def apply_local(state: StateLike, j_signal: np.ndarray, j_idler: np.ndarray) -> StateLike:
    """Apply J_s (x) J_i; pure states stay pure, density matrices are conjugated"""
    for operator in (j_signal, j_idler):
        if not is_unitary(operator):
            raise NonUnitaryOperatorException(unitarity_deviation(operator))
    joint = np.kron(j_signal, j_idler)
    if isinstance(state, BiphotonState):
        return BiphotonState(joint @ state.amplitudes)
    return BiphotonDensity(joint @ state.matrix @ joint.conj().T)


def through_sample(state: StateLike, sample: SampleSpec) -> StateLike:
    """The sample sits in the idler arm"""
    return apply_local(state, IDENTITY_2, retarder(sample.theta, sample.delta))


def depolarize(state: BiphotonState, visibility: float) -> BiphotonDensity:
    """Werner-type mixture v |psi><psi| + (1 - v) I/4"""
    if not 0.0 <= visibility <= 1.0:
        raise InvalidConfigException(f"visibility must lie in [0, 1], got {visibility}")
    pure = state.density().matrix
    return BiphotonDensity(visibility * pure + (1.0 - visibility) * np.eye(4) / 4.0)


# ==================== Projective Measurement ====================

def projector(setting: ProjectorSetting) -> np.ndarray:
    """HWP at h followed by a PBS; transmitted projects onto linear polarization at 2h"""
    c = np.cos(2 * setting.hwp_angle)
    s = np.sin(2 * setting.hwp_angle)
    if setting.port == Port.TRANSMITTED:
        matrix = [[c * c, c * s], [c * s, s * s]]
    else:
        matrix = [[s * s, -c * s], [-c * s, c * c]]
    return np.array(matrix, dtype=complex)


def coincidence_probability(state: StateLike, config: AnalyzerConfig) -> float:
    """tr[(E_s (x) E_i) rho], with the compensator applied to the idler before its analyzer"""
    rho = as_density(state)
    if config.compensator_present:
        rho = apply_local(rho, IDENTITY_2, qwp(config.compensator_angle))
    joint = np.kron(projector(config.signal), projector(config.idler))
    probability = float(np.real(np.trace(joint @ rho.matrix)))
    return min(max(probability, 0.0), 1.0)


def port_probabilities(
    state: StateLike,
    signal_hwp: float,
    idler_hwp: float,
    compensator_present: bool = False,
    compensator_angle: float = 0.0,
) -> np.ndarray:
    """2x2 table of coincidence probabilities indexed [signal port][idler port], transmitted first"""
    ports = (Port.TRANSMITTED, Port.REFLECTED)
    table = np.empty((2, 2))
    for i, port_s in enumerate(ports):
        for j, port_i in enumerate(ports):
            config = AnalyzerConfig(
                signal=ProjectorSetting(hwp_angle=signal_hwp, port=port_s),
                idler=ProjectorSetting(hwp_angle=idler_hwp, port=port_i),
                compensator_present=compensator_present,
                compensator_angle=compensator_angle,
            )
            table[i, j] = coincidence_probability(state, config)
    return table


def oracle_probability(
    h_s: float,
    h_i: float,
    theta: float,
    delta: float,
    compensator: bool = False,
    source: StateLike = None,
) -> float:
    """First-principles coincidence probability for the transmitted ports"""
    evolved = through_sample(source if source is not None else bell_phi_plus(), SampleSpec(theta=theta, delta=delta))
    config = AnalyzerConfig(
        signal=ProjectorSetting(hwp_angle=h_s),
        idler=ProjectorSetting(hwp_angle=h_i),
        compensator_present=compensator,
    )
    return coincidence_probability(evolved, config)


# ==================== Closed-Form Models ====================

def model_no_compensator(h_s, h_i, theta, delta) -> Tuple[np.ndarray, np.ndarray]:
    """Intensity fraction and its delta-derivative without compensator (equals 2 x probability)"""
    c, s = np.cos(delta), np.sin(delta)
    parallel = np.cos(4 * (h_s + h_i))
    crossed = np.cos(4 * (h_i - h_s - theta))
    intensity = 0.25 * (2 - (1 + c) * parallel - (1 - c) * crossed)
    derivative = 0.25 * s * (parallel - crossed)
    return intensity, derivative


def model_compensator(h_s, h_i, theta, delta) -> Tuple[np.ndarray, np.ndarray]:
    """Intensity fraction and its delta-derivative with the quarter-wave compensator at 0"""
    cos_half_sq = np.cos(delta / 2) ** 2
    sin_half_sq = np.sin(delta / 2) ** 2
    axis_term = np.sin(4 * h_s + 2 * theta)
    intensity = 0.25 * (
        1
        - np.cos(4 * h_i) * (np.cos(4 * h_s) * cos_half_sq + np.cos(4 * h_s + 4 * theta) * sin_half_sq)
        - np.sin(4 * h_i) * axis_term * np.sin(delta)
    )
    derivative = 0.25 * axis_term * (
        np.sin(delta) * np.sin(2 * theta) * np.cos(4 * h_i) - np.cos(delta) * np.sin(4 * h_i)
    )
    return intensity, derivative


def model_senarmont(h_i, delta) -> Tuple[np.ndarray, np.ndarray]:
    """H-base signal, sample axis at 45 degrees: (1/2) sin^2(delta/2 - 2 h_i)"""
    intensity = 0.5 * np.sin(delta / 2 - 2 * h_i) ** 2
    derivative = 0.25 * np.sin(delta - 4 * h_i)
    return intensity, derivative


def sweep_validity(h_s: float, theta: float, tol: float = VALIDITY_TOL) -> bool:
    """False when 4 h_s + 2 theta is a multiple of pi (counts then ignore delta)"""
    return wrapped_distance(4 * h_s + 2 * theta, 0.0, period=np.pi) > tol
