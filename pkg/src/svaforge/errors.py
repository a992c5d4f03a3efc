"""Exception hierarchy shared across the pipeline."""


class SvaForgeError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SvaForgeError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        loc = ""
        if line is not None:
            loc = f" at line {line}" + (f", col {col}" if col is not None else "")
        super().__init__(f"{message}{loc}")
        self.message = message


class WidthError(SvaForgeError):
    pass


class UnknownNameError(SvaForgeError):
    pass


class BoundViolation(SvaForgeError):
    """An operation would exceed a fixed iteration cap (callers escalate to HIL)."""


class ParseFailure(ParseError):
    """Property text could not be parsed."""


class UnsupportedConstruct(ParseError):
    """A recognised SVA construct outside the supported subset."""

    def __init__(self, token, line=None, col=None):
        super().__init__(f"unsupported construct: '{token}'", line, col)
        self.token = token


class UnfixableDiagnostic(SvaForgeError):
    pass


class RelKindMismatch(SvaForgeError):
    pass


class DanglingEndpoint(SvaForgeError):
    pass


class UnknownNode(SvaForgeError):
    pass


class UnboundName(SvaForgeError):
    pass


class DepthTooSmall(SvaForgeError):
    pass


class MalformedHeader(SvaForgeError):
    pass


class UnknownIdCode(SvaForgeError):
    pass


class NonMonotonicTime(SvaForgeError):
    pass


class UnknownSignal(SvaForgeError):
    pass


class MissingSection(SvaForgeError):
    pass


class DuplicateSection(SvaForgeError):
    pass


class EmptySignalList(SvaForgeError):
    pass


class InvalidCorrection(SvaForgeError):
    pass


class ConfigError(SvaForgeError):
    pass


class BackendProtocolError(SvaForgeError):
    pass


class WorkspaceConflict(SvaForgeError):
    pass


class UnknownItem(SvaForgeError):
    pass


class IllegalTransition(SvaForgeError):
    pass


class IncompleteRun(SvaForgeError):
    pass
