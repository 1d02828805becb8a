"""
Estimation Service
Recovers (delta, I0) from sweep datasets by damped Gauss-Newton least squares
against the closed-form models, Senarmont extremum estimation,
initial-scale sensitivity scans and Table-1 style statistics
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from entangleometer.models.schemas import (
    AggregateSummary,
    FitConfig,
    FitModel,
    FitResult,
    SensitivityReport,
    SweepDataset,
)
from entangleometer.services.biphoton import (
    model_compensator,
    model_no_compensator,
    model_senarmont,
    sweep_validity,
)
from entangleometer.services.classical_psa import classical_validity, psa_sweep
from entangleometer.services.errors import (
    DegenerateSweepException,
    InsufficientDataException,
    InvalidConfigException,
    NonConvergenceException,
)
from entangleometer.services.polcore import (
    TWO_PI,
    fold_half_turn,
    signed_wrapped_difference,
    wrap_angle,
    wrapped_distance,
)

logger = logging.getLogger(__name__)

Curve = Callable[[np.ndarray, float], Tuple[np.ndarray, np.ndarray]]

MIN_RECORDS = 4
DEPENDENCE_TOL = 1e-12
ANCHOR_GRID = 720
CONDITION_LIMIT = 1e14


# ==================== Model Dispatch ====================

def model_curve(config: FitConfig) -> Curve:
    """f(angles, delta) -> (intensity fraction, d fraction / d delta) for the configured family"""
    if config.model == FitModel.NO_COMPENSATOR:
        return lambda angles, delta: model_no_compensator(config.signal_hwp, angles, config.theta, delta)
    if config.model == FitModel.COMPENSATOR:
        return lambda angles, delta: model_compensator(config.signal_hwp, angles, config.theta, delta)
    if config.model == FitModel.SENARMONT:
        return lambda angles, delta: model_senarmont(angles, delta)
    return lambda angles, delta: psa_sweep(angles, config.polarizer_angle, config.theta, delta, config.compensator)


def is_folded(config: FitConfig) -> bool:
    """Families that see delta only through cos(delta)"""
    return config.model == FitModel.NO_COMPENSATOR or (
        config.model == FitModel.CLASSICAL_PSA and not config.compensator
    )


def canonical_delta(delta: float, config: FitConfig) -> float:
    return fold_half_turn(delta) if is_folded(config) else wrap_angle(delta)


def ambiguity_label(config: FitConfig) -> str:
    if is_folded(config):
        return "delta and 2*pi - delta are indistinguishable; reported in [0, pi]"
    return "delta reported modulo 2*pi in [0, 2*pi)"


def check_informative(angles: np.ndarray, config: FitConfig) -> None:
    """Raise DegenerateSweepException when the sweep cannot depend on delta"""
    if config.model in (FitModel.NO_COMPENSATOR, FitModel.COMPENSATOR):
        if not sweep_validity(config.signal_hwp, config.theta):
            raise DegenerateSweepException(
                f"4*h_s + 2*theta is a multiple of pi (h_s={config.signal_hwp:.6g}, theta={config.theta:.6g})"
            )
    elif config.model == FitModel.CLASSICAL_PSA and not classical_validity(config.polarizer_angle, config.theta):
        raise DegenerateSweepException(
            f"sample axis {config.theta:.6g} rad is parallel or perpendicular to the polarizer"
        )

    curve = model_curve(config)
    grid = np.linspace(0.0, TWO_PI, 16, endpoint=False)
    values = np.array([curve(angles, delta)[0] for delta in grid])
    if np.max(np.ptp(values, axis=0)) <= DEPENDENCE_TOL:
        raise DegenerateSweepException("model values do not depend on retardance over this sweep")


# ==================== Least Squares ====================

class _SweepProblem:
    """Residuals w (y - s f(delta)) with the analytic Jacobian"""

    def __init__(self, angles: np.ndarray, counts: np.ndarray, curve: Curve, weights: np.ndarray):
        self.angles = angles
        self.counts = counts
        self.curve = curve
        self.weights = weights

    def residuals(self, x: np.ndarray) -> np.ndarray:
        fraction, _ = self.curve(self.angles, x[0])
        return self.weights * (self.counts - x[1] * fraction)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        fraction, derivative = self.curve(self.angles, x[0])
        return np.column_stack([-self.weights * x[1] * derivative, -self.weights * fraction])

    def linear_scale(self, delta: float) -> float:
        """Best scale at fixed delta"""
        fraction, _ = self.curve(self.angles, delta)
        w2 = self.weights ** 2
        denominator = np.sum(w2 * fraction ** 2)
        if denominator <= 0:
            return max(float(self.counts.max()), 1.0)
        scale = float(np.sum(w2 * fraction * self.counts) / denominator)
        return scale if scale > 0 else max(float(self.counts.max()), 1.0)


def _weights(counts: np.ndarray, poisson: bool) -> np.ndarray:
    if poisson:
        return 1.0 / np.sqrt(np.maximum(counts, 1.0))
    return np.ones_like(counts)


def _standard_errors(jacobian: np.ndarray, residuals: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
    dof = jacobian.shape[0] - jacobian.shape[1]
    normal = jacobian.T @ jacobian
    if dof <= 0 or np.linalg.cond(normal) > CONDITION_LIMIT:
        return None, None
    variance = float(residuals @ residuals) / dof
    covariance = variance * np.linalg.inv(normal)
    return float(np.sqrt(max(covariance[0, 0], 0.0))), float(np.sqrt(max(covariance[1, 1], 0.0)))


def _prepare(data: SweepDataset, minimum: int = MIN_RECORDS) -> Tuple[np.ndarray, np.ndarray]:
    angles, counts = data.angles(), data.counts()
    if len(angles) < minimum:
        raise InsufficientDataException(len(angles), minimum)
    if not np.all(np.isfinite(counts)):
        raise InvalidConfigException("counts must be finite")
    return angles, counts


def fit_retardance(data: SweepDataset, config: FitConfig) -> FitResult:
    """
    Least-squares estimate of (delta, scale)

    Minimizes sum_k w_k^2 (counts_k - scale f(angle_k; delta))^2 with MINPACK's
    Levenberg-Marquardt (damped Gauss-Newton) on the analytic Jacobian. Without
    an initial delta, evenly spaced starts cover the periodic objective and the
    lowest converged cost wins.
    """
    angles, counts = _prepare(data)
    check_informative(angles, config)

    problem = _SweepProblem(angles, counts, model_curve(config), _weights(counts, config.poisson_weighting))
    if config.initial_delta is not None:
        starts = [config.initial_delta]
    else:
        starts = (np.arange(config.multi_starts) + 0.5) * TWO_PI / config.multi_starts

    best = None
    evaluations = 0
    for delta0 in starts:
        scale0 = config.initial_scale if config.initial_scale is not None else problem.linear_scale(delta0)
        solution = least_squares(
            problem.residuals,
            np.array([delta0, scale0], dtype=float),
            jac=problem.jacobian,
            method="lm",
            xtol=config.convergence_tol,
            ftol=config.convergence_tol,
            gtol=config.convergence_tol,
            max_nfev=config.max_iterations,
            x_scale="jac",
        )
        evaluations += solution.nfev
        if solution.status <= 0:
            logger.debug("Start delta0=%.4f did not converge: %s", delta0, solution.message)
            continue
        if best is None or solution.cost < best.cost:
            best = solution

    if best is None:
        raise NonConvergenceException(evaluations)

    delta_raw, scale_hat = best.x
    std_delta, std_scale = _standard_errors(best.jac, best.fun)
    fraction, _ = problem.curve(angles, delta_raw)
    return FitResult(
        model=config.model,
        delta_hat=canonical_delta(delta_raw, config),
        scale_hat=float(scale_hat),
        residual_norm=float(np.linalg.norm(counts - scale_hat * fraction)),
        std_delta=std_delta,
        std_scale=std_scale,
        iterations=int(best.nfev),
        converged=True,
        ambiguity=ambiguity_label(config),
    )


# ==================== Senarmont Extremum ====================

def fit_sinusoid(angles: np.ndarray, counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Linear least squares for offset + c1 cos(4h) + c2 sin(4h)

    Returns the coefficients, their covariance (residual variance scaled) and
    the residuals.
    """
    if np.ptp(4 * angles) < np.pi:
        raise DegenerateSweepException("sweep covers less than half a fringe period")
    design = np.column_stack([np.ones_like(angles), np.cos(4 * angles), np.sin(4 * angles)])
    coefficients, _, rank, _ = np.linalg.lstsq(design, counts, rcond=None)
    if rank < 3:
        raise DegenerateSweepException("sweep angles do not resolve the sinusoid")
    residuals = counts - design @ coefficients
    dof = len(counts) - 3
    variance = float(residuals @ residuals) / dof if dof > 0 else 0.0
    covariance = variance * np.linalg.inv(design.T @ design)
    return coefficients, covariance, residuals


def senarmont_estimate(data: SweepDataset) -> FitResult:
    """
    Classic Senarmont reading: locate the null of the fitted sinusoid

    The null of offset + c1 cos(4h) + c2 sin(4h) sits at 4 h* = delta.
    """
    angles, counts = _prepare(data)
    coefficients, covariance, residuals = fit_sinusoid(angles, counts)
    _, c1, c2 = coefficients
    amplitude = float(np.hypot(c1, c2))

    amplitude_std = 0.0
    delta_std = None
    if amplitude > 0:
        amplitude_grad = np.array([0.0, c1, c2]) / amplitude
        amplitude_std = float(np.sqrt(max(amplitude_grad @ covariance @ amplitude_grad, 0.0)))
        delta_grad = np.array([0.0, -c2, c1]) / amplitude ** 2
        delta_std = float(np.sqrt(max(delta_grad @ covariance @ delta_grad, 0.0)))
    if amplitude <= max(3.0 * amplitude_std, 1e-12 * float(np.max(np.abs(counts)))):
        raise DegenerateSweepException("fitted fringe amplitude is consistent with zero")

    has_dof = len(counts) > 3
    return FitResult(
        model=FitModel.SENARMONT,
        delta_hat=wrap_angle(np.arctan2(-c2, -c1)),
        scale_hat=4.0 * amplitude,
        residual_norm=float(np.linalg.norm(residuals)),
        std_delta=delta_std if has_dof else None,
        std_scale=4.0 * amplitude_std if has_dof else None,
        iterations=1,
        converged=True,
        ambiguity="delta reported modulo 2*pi in [0, 2*pi)",
    )


# ==================== Sensitivity ====================

def shot_noise_std(angles: np.ndarray, curve: Curve, scale: float, delta: float, weights: np.ndarray = None) -> float:
    """Delta standard deviation at fixed scale when each count has Poisson variance equal to its mean"""
    fraction, derivative = curve(angles, delta)
    weights = np.ones_like(angles) if weights is None else weights
    jacobian = scale * derivative
    information = np.sum(weights ** 2 * jacobian ** 2)
    if information <= 0:
        return float("inf")
    spread = np.sum(weights ** 4 * jacobian ** 2 * np.maximum(scale * fraction, 0.0))
    return float(np.sqrt(spread) / information)


def _anchored_delta(problem: _SweepProblem, scale: float, config: FitConfig) -> float:
    """Global delta estimate with the scale held fixed"""
    grid = np.linspace(0.0, TWO_PI, ANCHOR_GRID, endpoint=False)
    costs = [np.sum(problem.residuals(np.array([delta, scale])) ** 2) for delta in grid]
    delta0 = grid[int(np.argmin(costs))]

    def residuals(x):
        return problem.residuals(np.array([x[0], scale]))

    def jacobian(x):
        return problem.jacobian(np.array([x[0], scale]))[:, :1]

    solution = least_squares(
        residuals,
        np.array([delta0]),
        jac=jacobian,
        method="lm",
        xtol=config.convergence_tol,
        ftol=config.convergence_tol,
        gtol=config.convergence_tol,
        max_nfev=config.max_iterations,
    )
    if solution.status <= 0:
        raise NonConvergenceException(solution.nfev)
    return float(solution.x[0])


def sensitivity_scan(data: SweepDataset, config: FitConfig) -> SensitivityReport:
    """
    Re-estimate delta with the photon-number scale anchored at perturbed values

    Anchors are s_hat (1 + g) for g evenly spaced in [-scale_perturbation,
    +scale_perturbation]. The sweep is flagged dependent when the spread of the
    anchored estimates exceeds dependence_factor times the smallest finite
    shot-noise delta deviation among them.
    """
    central = fit_retardance(data, config)
    angles, counts = _prepare(data)
    weights = _weights(counts, config.poisson_weighting)
    problem = _SweepProblem(angles, counts, model_curve(config), weights)

    offsets = np.linspace(-config.scale_perturbation, config.scale_perturbation, config.perturbation_steps)
    anchors = central.scale_hat * (1.0 + offsets)
    deltas: List[float] = []
    sigmas: List[float] = []
    failures: List[str] = []
    for anchor in anchors:
        try:
            delta = canonical_delta(_anchored_delta(problem, anchor, config), config)
        except NonConvergenceException as e:
            failures.append(f"scale {anchor:.6g}: {e.reason}")
            continue
        deltas.append(delta)
        sigmas.append(shot_noise_std(angles, problem.curve, anchor, delta, weights))

    if not deltas:
        raise NonConvergenceException(config.max_iterations * len(anchors), "every anchored fit failed")

    if is_folded(config):
        spread = float(np.ptp(deltas))
    else:
        spread = float(np.ptp(signed_wrapped_difference(deltas, central.delta_hat)))
    finite = [sigma for sigma in sigmas if np.isfinite(sigma) and sigma > 0]
    threshold = config.dependence_factor * min(finite) if finite else 0.0

    if failures:
        logger.warning("⚠️ %d of %d anchored fits failed", len(failures), len(anchors))
    return SensitivityReport(
        scale_anchors=[float(anchor) for anchor in anchors],
        delta_hats=deltas,
        spread=spread,
        threshold=float(threshold),
        dependent=bool(spread > threshold),
        failures=failures,
    )


# ==================== Statistics ====================

def relative_error(delta_hat: float, delta_std: float) -> float:
    """|delta_hat - delta_std| / delta_std with a wrapped numerator"""
    if delta_std <= 0:
        raise InvalidConfigException("reference retardance must be positive")
    return wrapped_distance(delta_hat, delta_std) / delta_std


def signed_relative_error(delta_hat: float, delta_std: float) -> float:
    if delta_std <= 0:
        raise InvalidConfigException("reference retardance must be positive")
    return float(signed_wrapped_difference(delta_hat, delta_std)) / delta_std


def aggregate(results: Sequence[FitResult], delta_std: float) -> AggregateSummary:
    """Mean and sample standard deviation of delta_hat and of the relative error"""
    if len(results) < 2:
        raise InsufficientDataException(len(results), 2)
    if delta_std <= 0:
        raise InvalidConfigException("reference retardance must be positive")

    offsets = np.array([signed_wrapped_difference(r.delta_hat, delta_std) for r in results], dtype=float)
    deltas = delta_std + offsets
    relative = offsets / delta_std

    mean_delta, std_delta = float(np.mean(deltas)), float(np.std(deltas, ddof=1))
    mean_rel, std_rel = float(np.mean(relative)), float(np.std(relative, ddof=1))
    return AggregateSummary(
        count=len(results),
        delta_std=delta_std,
        mean_delta=mean_delta,
        std_delta=std_delta,
        mean_relative_error=mean_rel,
        std_relative_error=std_rel,
        mean_abs_relative_error=float(np.mean(np.abs(relative))),
        max_abs_relative_error=float(np.max(np.abs(relative))),
        delta_cell=f"{mean_delta:.4f} ± {std_delta:.4f}",
        relative_error_cell=f"{mean_rel * 100:.2f}% ± {std_rel * 100:.2f}%",
    )
