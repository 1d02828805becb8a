"""
Polarization Core
Jones-calculus primitives: rotators, retarders, polarizer projections and
the physical-parameter to retardance conversion
"""
import numpy as np

from entangleometer.models.schemas import PhysicalSample
from entangleometer.services.errors import InvalidConfigException

TWO_PI = 2.0 * np.pi
UNITARY_TOL = 1e-10

H = np.array([1.0, 0.0], dtype=complex)
V = np.array([0.0, 1.0], dtype=complex)


# ==================== Operators ====================

def rotation(alpha: float) -> np.ndarray:
    """R(alpha) = [[cos, sin], [-sin, cos]]; det = 1"""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, s], [-s, c]], dtype=complex)


def retarder(theta: float, delta: float) -> np.ndarray:
    """
    Linear retarder with fast axis at theta and retardance delta

    Returns R(-theta) . diag(1, exp(i delta)) . R(theta), no global phase
    normalization.
    """
    core = np.diag([1.0, np.exp(1j * delta)])
    return rotation(-theta) @ core @ rotation(theta)


def retarder_derivative(theta: float, delta: float) -> np.ndarray:
    """d retarder / d delta"""
    core = np.diag([0.0, 1j * np.exp(1j * delta)])
    return rotation(-theta) @ core @ rotation(theta)


def hwp(theta: float) -> np.ndarray:
    return retarder(theta, np.pi)


def qwp(theta: float) -> np.ndarray:
    return retarder(theta, np.pi / 2)


def linear_state(angle: float) -> np.ndarray:
    """Jones vector of linear polarization at angle (H = 0)"""
    return np.array([np.cos(angle), np.sin(angle)], dtype=complex)


def polarizer(angle: float) -> np.ndarray:
    """Rank-1 projector onto linear polarization at angle"""
    state = linear_state(angle)
    return np.outer(state, state.conj())


def retardance_of(sample: PhysicalSample) -> float:
    """delta = 2 pi |n_e - n_o| d / lambda, not wrapped"""
    if sample.wavelength_nm <= 0:
        raise InvalidConfigException("wavelength must be positive")
    return TWO_PI * sample.birefringence * sample.thickness_nm / sample.wavelength_nm


# ==================== Checks and Angles ====================

def unitarity_deviation(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix)
    return float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))))


def is_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    return unitarity_deviation(matrix) <= tol


def wrap_angle(value, period: float = TWO_PI):
    """Reduce to [0, period)"""
    wrapped = np.mod(value, period)
    # mod can return period itself for tiny negative inputs
    wrapped = np.where(wrapped >= period, 0.0, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def signed_wrapped_difference(a, b, period: float = TWO_PI):
    """a - b reduced to [-period/2, period/2)"""
    return np.mod(np.asarray(a) - np.asarray(b) + period / 2, period) - period / 2


def wrapped_distance(a, b, period: float = TWO_PI):
    distance = np.abs(signed_wrapped_difference(a, b, period))
    return float(distance) if np.ndim(distance) == 0 else distance


def fold_half_turn(delta: float) -> float:
    """Map a retardance onto [0, pi] using the cos-delta symmetry delta -> 2 pi - delta"""
    wrapped = wrap_angle(delta)
    return float(TWO_PI - wrapped if wrapped > np.pi else wrapped)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-12) -> bool:
    """Entrywise comparison after removing the best global phase"""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return bool(np.max(np.abs(a - phase * b)) <= atol)
