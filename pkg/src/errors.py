"""Exception hierarchy shared by the library and the command line."""


class HurstError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HurstError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class RankDeficiencyError(DomainError):
    """The local polynomial design has fewer support points than coefficients."""


class SynthesisError(HurstError, RuntimeError):
    """Exact Gaussian synthesis failed by every available method."""


class NumericalInconsistencyError(HurstError, ArithmeticError):
    """A quantity that must be positive came out non-positive."""


class DegenerateVarianceError(HurstError):
    """The estimated variance clock is identically zero."""


class ConfigError(HurstError):
    """The configuration file or the command-line flags are invalid."""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def exit_code_for(exc):
    """
    Map an exception to the process exit code.

    Args:
        exc (BaseException): The exception that stopped the command.

    Returns:
        int: 2 for configuration problems, 3 for everything else.

    """
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    return EXIT_RUNTIME
