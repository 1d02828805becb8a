"""
Shared builders for test datasets and states
"""
import numpy as np

from entangleometer.models.schemas import (
    DetectionModel,
    Mode,
    SampleSpec,
    SweepPlan,
    SweptParameter,
)
from entangleometer.services.detection import run_sweep

HWP_DELTA = 3.1341
QWP_DELTA = 1.5522


def sweep_angles(points: int = 36, stop: float = np.pi) -> list:
    """Evenly spaced angles over [0, stop), endpoint excluded"""
    return [float(a) for a in np.linspace(0.0, stop, points, endpoint=False)]


def quantum_plan(compensator: bool, signal_hwp: float = 0.0, points: int = 36, visibility: float = 1.0) -> SweepPlan:
    return SweepPlan(
        angles=sweep_angles(points),
        signal_hwp=signal_hwp,
        compensator_present=compensator,
        source_visibility=visibility,
    )


def classical_plan(compensator: bool, polarizer_angle: float = 0.0, points: int = 36) -> SweepPlan:
    return SweepPlan(
        mode=Mode.CLASSICAL,
        swept_parameter=SweptParameter.ANALYZER,
        angles=sweep_angles(points),
        polarizer_angle=polarizer_angle,
        compensator_present=compensator,
    )


def simulate(plan: SweepPlan, delta: float, model: DetectionModel, seed=None, theta: float = np.pi / 4):
    return run_sweep(plan, SampleSpec(theta=theta, delta=delta), model, seed=seed)


def random_density(rng: np.random.Generator, rank: int = 4) -> np.ndarray:
    """Ginibre-distributed 4x4 density matrix of the given rank"""
    ginibre = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = ginibre @ ginibre.conj().T
    return rho / np.trace(rho).real
