"""Exception hierarchy. Each class maps onto a CLI exit code."""


class PosixError(Exception):
    exit_code = 1


class ConfigError(PosixError):
    exit_code = 2


class CredentialError(ConfigError):
    pass


class TemplateError(ConfigError):
    pass


class ProviderError(PosixError):
    exit_code = 3

    def __init__(self, message, attempts=None, last_status=None):
        super().__init__(message)
        self.attempts = attempts
        self.last_status = last_status


class BoundaryError(ProviderError):
    """The backend tokenized prompt+response differently from the prompt alone."""

    def __init__(self, message, prompt_tokens=0, mismatch_at=None):
        super().__init__(message)
        self.prompt_tokens = prompt_tokens
        self.mismatch_at = mismatch_at


class ParaphraseShortfallError(ProviderError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = list(partial)


class DataError(PosixError):
    exit_code = 4


class NoDataError(DataError):
    pass


class InvalidInputError(DataError, ValueError):
    pass


class SetTooSmallError(InvalidInputError):
    pass


class InvalidMatrixError(InvalidInputError):
    pass


class UndefinedCorrelationError(DataError):
    pass


class InapplicableErrorType(ValueError):
    """A spelling error type cannot be applied to the given word."""


class PartialRunError(PosixError):
    exit_code = 5

    def __init__(self, message, set_id=None, completed=None, cause=None):
        super().__init__(message)
        self.set_id = set_id
        self.completed = completed or []
        self.cause = cause
