"""Exception hierarchy.

Each exception carries the CLI exit code it maps to: 2 for usage and
configuration problems, 3 for problems with the data, 4 for numerical
failures.
"""


class KencohError(Exception):
    exit_code = 1


class InvalidConfigurationError(KencohError, ValueError):
    exit_code = 2


class InvalidArgumentError(KencohError, ValueError):
    exit_code = 2


class UnsupportedConfigurationError(InvalidConfigurationError):
    pass


class InsufficientDataError(KencohError, ValueError):
    exit_code = 3


class InsufficientTrialsError(InsufficientDataError):
    pass


class DegenerateChannelError(KencohError, ValueError):
    exit_code = 3

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"channel in column {column} has zero variance")


class DegenerateDataError(KencohError, ValueError):
    exit_code = 3


class ParseError(KencohError, ValueError):
    exit_code = 3

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class IllConditionedMatrixError(KencohError, ArithmeticError):
    exit_code = 4

    def __init__(self, eigenvalue, threshold):
        self.eigenvalue = eigenvalue
        self.threshold = threshold
        super().__init__(
            f"matrix is ill-conditioned: eigenvalue {eigenvalue:.3e} below {threshold:.1e}"
        )


class InternalConsistencyError(KencohError, ArithmeticError):
    exit_code = 4


class CalibrationError(KencohError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, achieved_max=None):
        self.achieved_max = achieved_max
        super().__init__(message)


class TrialFailure(KencohError):
    """Raised in strict mode when one or more trials could not be processed."""

    exit_code = 3

    def __init__(self, failures):
        self.failures = list(failures)
        lines = ", ".join(f"trial {i}: {err}" for i, err in self.failures)
        super().__init__(f"{len(self.failures)} trial(s) failed ({lines})")
        if self.failures and all(
            getattr(err, "exit_code", 3) == 4 for _, err in self.failures
        ):
            self.exit_code = 4
