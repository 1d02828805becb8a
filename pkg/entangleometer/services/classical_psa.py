"""
Classical PSA Service
Polarizer-Sample-Analyzer transmission ellipsometer evaluated through the
Jones chain A R(a) [C] S R(-p) P L_in, the printed intensity formula kept as a
regression target, and the quantum to classical angle substitution
"""
from typing import Tuple

import numpy as np

from entangleometer.models.schemas import PsaConfig
from entangleometer.services.biphoton import sweep_validity
from entangleometer.services.polcore import (
    H,
    polarizer,
    qwp,
    retarder,
    retarder_derivative,
    rotation,
)


def _sample_input(polarizer_angle: float) -> np.ndarray:
    """R(-p) P L_in for unit horizontal input"""
    return rotation(-polarizer_angle) @ polarizer(0.0) @ H


def psa_amplitude(config: PsaConfig) -> np.ndarray:
    """Output Jones vector L_out"""
    sample = retarder(config.theta, config.delta)
    if config.compensator_present:
        sample = qwp(0.0) @ sample
    return polarizer(0.0) @ rotation(config.analyzer_angle) @ sample @ _sample_input(config.polarizer_angle)


def psa_intensity(config: PsaConfig) -> float:
    """I_out / I_0 from the Jones chain"""
    return float(np.sum(np.abs(psa_amplitude(config)) ** 2))


def psa_closed_form(polarizer_angle, analyzer_angle, theta, delta):
    """Printed no-compensator intensity, kept as a regression target for the Jones chain"""
    p, a = polarizer_angle, analyzer_angle
    return 0.25 * (
        2
        + (1 + np.cos(delta)) * np.cos(2 * (a - p))
        + (1 - np.cos(delta)) * np.cos(2 * (a + p - 2 * theta))
    )


def psa_sweep(
    analyzer_angles,
    polarizer_angle: float,
    theta: float,
    delta: float,
    compensator_present: bool,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized intensity and d(intensity)/d(delta) over analyzer angles, from the Jones chain"""
    analyzer_angles = np.asarray(analyzer_angles, dtype=float)
    sample = retarder(theta, delta)
    d_sample = retarder_derivative(theta, delta)
    if compensator_present:
        sample = qwp(0.0) @ sample
        d_sample = qwp(0.0) @ d_sample
    incoming = _sample_input(polarizer_angle)
    field = sample @ incoming
    d_field = d_sample @ incoming
    # first row of R(a): the horizontal analyzer keeps only this component
    row = np.stack([np.cos(analyzer_angles), np.sin(analyzer_angles)], axis=1)
    amplitude = row @ field
    d_amplitude = row @ d_field
    intensity = np.abs(amplitude) ** 2
    derivative = 2.0 * np.real(np.conj(amplitude) * d_amplitude)
    return intensity, derivative


def quantum_classical_map(h_s: float, h_i: float) -> Tuple[float, float]:
    """(p, a) with a = 2 h_i and p = pi/2 - 2 h_s"""
    return np.pi / 2 - 2 * h_s, 2 * h_i


def classical_validity(polarizer_angle: float, theta: float) -> bool:
    """Sample axis parallel or perpendicular to the polarizer carries no retardance information"""
    h_s = (np.pi / 2 - polarizer_angle) / 2
    return sweep_validity(h_s, theta)
