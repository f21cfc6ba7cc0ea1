class DiscernError(Exception):
    """Base class for every error raised by the agent, its runtime and its tools."""


class ShapeError(DiscernError, ValueError):
    def __init__(self, node: str, message: str):
        self.node = node
        super().__init__(f"[{node}] {message}")


class NonScalarLossError(DiscernError, ValueError):
    pass


class NonFiniteGradientError(DiscernError, ArithmeticError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__(f"non-finite gradient for: {', '.join(self.names)}")


class EnvironmentConfigError(DiscernError, ValueError):
    pass


class InvalidActionError(DiscernError, ValueError):
    pass


class ColdBufferError(DiscernError, RuntimeError):
    pass


class ConfigError(DiscernError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CheckpointError(DiscernError, IOError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class ConfigMismatchError(DiscernError, ValueError):
    pass


class UnknownPresetError(DiscernError, KeyError):
    def __init__(self, name: str, known):
        self.name = name
        self.known = sorted(known)
        super().__init__(f"unknown preset {name!r}; choose one of: {', '.join(self.known)}")

    def __str__(self) -> str:
        return self.args[0]


class EmptyReportError(DiscernError, ValueError):
    pass


class OutOfRangeError(DiscernError, ValueError):
    pass
