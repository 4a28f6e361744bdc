"""Exception hierarchy shared by every pipeline stage.

Each class carries the process exit code the CLI maps it to, so callers only
need ``except SynthesisError as e: return e.exit_code``.
"""


class SynthesisError(Exception):
    exit_code = 1

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self):
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


# --- Input errors (exit 2) ---

class ParseError(SynthesisError):
    """Raised for malformed input. Carries the source position when known."""

    exit_code = 2

    def __init__(self, message, line=None, column=None, source=None):
        super().__init__(message, stage="parse")
        self.line = line
        self.column = column
        self.source = source

    def __str__(self):
        where = self.source or "<input>"
        if self.line is not None:
            return f"{where}:{self.line}:{self.column}: {self.message}"
        return f"{where}: {self.message}"


class SyntaxError_(ParseError):
    pass


class SortError(ParseError):
    pass


class UnknownLabel(ParseError):
    pass


class DuplicateName(ParseError):
    pass


class UnknownSymbol(ParseError):
    pass


class PartialApplication(SynthesisError):
    """A built-in produced a value outside the declared result domain."""

    exit_code = 2

    def __init__(self, message, state=None, instruction=None):
        super().__init__(message, stage="evaluate")
        self.state = state
        self.instruction = instruction


class UninitializedInAllInitMode(SynthesisError):
    exit_code = 2


class SkeletonMismatch(SynthesisError):
    exit_code = 2


# --- Decision outcomes ---

class Unsatisfiable(SynthesisError):
    exit_code = 3

    def __init__(self, message="specification inconsistent", tableau=None):
        super().__init__(message, stage="tableau")
        self.tableau = tableau


class ResourceLimit(SynthesisError):
    exit_code = 4


# --- Verification failures (exit 5) ---

class VerificationFailure(SynthesisError):
    exit_code = 5


class NonTotalModel(VerificationFailure):
    def __init__(self, message, state=None):
        super().__init__(message, stage="model-check")
        self.state = state


class DeadlockDetected(VerificationFailure):
    def __init__(self, message, state=None):
        super().__init__(message, stage="semantics")
        self.state = state


class SimDeadlock(VerificationFailure):
    def __init__(self, message, state=None):
        super().__init__(message, stage="simulate")
        self.state = state


class ProjectionUnsound(VerificationFailure):
    def __init__(self, message, fallback=None, witness=None):
        super().__init__(message, stage="projection")
        self.fallback = fallback
        self.witness = witness


class LockOrderViolation(VerificationFailure):
    pass


class ExtractionError(VerificationFailure):
    pass


class NoSuccessor(VerificationFailure):
    pass


class EmptyTableau(VerificationFailure):
    pass
