"""
Error Types
Exception hierarchy shared by the library, the CLI and the HTTP surface
"""


class EntangleometerException(Exception):
    """Base exception; carries a human-readable reason and a CLI exit code"""

    exit_code = 1
    http_status = 500

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "reason": self.reason,
            "exit_code": self.exit_code,
        }


class InvalidConfigException(EntangleometerException, ValueError):
    """Raised when an input value or configuration is rejected"""

    exit_code = 2
    http_status = 422

    def __init__(self, reason: str):
        super().__init__(f"Invalid configuration: {reason}")


class InvalidSweepException(InvalidConfigException):
    """Raised when a planned sweep cannot depend on the sample retardance"""

    def __init__(self, h_s: float, theta: float):
        self.h_s = h_s
        self.theta = theta
        super().__init__(
            f"sweep is insensitive to retardance (h_s={h_s:.6g} rad, theta={theta:.6g} rad): "
            "4*h_s + 2*theta is a multiple of pi; choose another base or sample axis "
            "or pass --override-validity"
        )


class NonUnitaryOperatorException(InvalidConfigException):
    """Raised when a non-unitary Jones matrix is used for local evolution"""

    def __init__(self, deviation: float):
        self.deviation = deviation
        super().__init__(f"operator is not unitary (max |U'U - I| = {deviation:.3e})")


class DegenerateSweepException(EntangleometerException):
    """Raised when the data cannot determine the retardance"""

    exit_code = 3
    http_status = 409

    def __init__(self, reason: str):
        super().__init__(f"Degenerate sweep: {reason}")


class InsufficientDataException(DegenerateSweepException):
    """Raised when a dataset has fewer records than an estimator needs"""

    def __init__(self, found: int, required: int):
        self.found = found
        self.required = required
        super().__init__(f"{found} records found, at least {required} required")


class IllConditionedException(DegenerateSweepException):
    """Raised when a tomography count table does not determine the state"""

    def __init__(self, reason: str):
        EntangleometerException.__init__(self, f"Ill-conditioned tomography: {reason}")


class NonConvergenceException(EntangleometerException):
    """Raised when the optimizer exhausts its iteration budget"""

    exit_code = 4
    http_status = 409

    def __init__(self, iterations: int, reason: str = "iteration budget exhausted"):
        self.iterations = iterations
        super().__init__(f"No convergence after {iterations} function evaluations: {reason}")
