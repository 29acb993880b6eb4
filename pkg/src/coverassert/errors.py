"""Exception types shared across the pipeline."""


class CoverAssertError(Exception):
    pass


class ArgumentError(CoverAssertError, ValueError):
    pass


class LexError(CoverAssertError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"offset {offset}: {message}")
        self.message = message
        self.offset = offset


class SvaSyntaxError(CoverAssertError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"offset {offset}: {message}")
        self.message = message
        self.offset = offset


# structural features
class NodeNotFound(CoverAssertError, KeyError):
    pass


class NotALeaf(CoverAssertError, ValueError):
    pass


class SyntaxRequired(CoverAssertError, ValueError):
    pass


class EmptyBatch(CoverAssertError, ValueError):
    pass


class LengthMismatch(CoverAssertError, ValueError):
    pass


# numerics
class DimensionMismatch(CoverAssertError, ValueError):
    pass


class ZeroVector(CoverAssertError, ValueError):
    pass


class DegenerateData(CoverAssertError):
    """All PCA input rows are identical; ``model`` holds the fallback fit."""

    def __init__(self, message: str, model=None):
        super().__init__(message)
        self.model = model


# backends
class BackendError(CoverAssertError):
    pass


class TransientBackendError(BackendError):
    """Timeouts, 5xx and rate limits; the gateway retries these."""


class AuthError(BackendError):
    pass


class EmptyResponse(BackendError):
    pass


# validation / files
class ValidationError(CoverAssertError, ValueError):
    def __init__(self, rule: str, detail: str = ""):
        super().__init__(f"{rule}: {detail}" if detail else rule)
        self.rule = rule
        self.detail = detail


class SchemaError(CoverAssertError, ValueError):
    pass


class RangeError(CoverAssertError, ValueError):
    pass


# loop
class AlreadyConverged(CoverAssertError):
    pass


class GeneratorError(CoverAssertError):
    def __init__(self, message: str, round_index: int | None = None):
        prefix = f"round {round_index}: " if round_index is not None else ""
        super().__init__(prefix + message)
        self.round_index = round_index
