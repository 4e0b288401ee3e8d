"""Exception hierarchy shared by the services and the CLI"""

from typing import Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class IFKernelError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(IFKernelError):
    """Invalid configuration, scenario or path."""

    exit_code = EXIT_CONFIG

    def __init__(self, detail: str, field: Optional[str] = None):
        super().__init__(f"{field}: {detail}" if field else detail)
        self.field = field


class NumericalError(IFKernelError):
    exit_code = EXIT_NUMERICAL


class DesignInfeasibleError(NumericalError):
    """The moment constraints cannot be met on the given offsets."""


class InvalidCovarianceError(NumericalError):
    """The covariance matrix is not symmetric positive definite."""


class UnsupportedOrderError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


class ZeroModulusError(NumericalError):
    def __init__(self, index: int):
        super().__init__(f"zero modulus at sample {index}")
        self.index = index


class ToneSeparationError(NumericalError):
    pass


class MissingEstimateError(NumericalError):
    def __init__(self, line: int):
        super().__init__(f"no estimate for line {line}")
        self.line = line
