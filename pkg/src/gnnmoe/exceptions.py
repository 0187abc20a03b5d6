"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A documented precondition was violated."""


class ParseError(ValueError):
    """A dataset or config file is malformed.

    The message always names the offending file and, when known, the line.
    """

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
