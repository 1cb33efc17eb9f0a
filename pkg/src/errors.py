"""
Exception types shared by the toolkit.

Every class derives from a builtin exception, so callers may catch
either the precise type or its builtin parent. Messages are prefixed
with the name of the failing operation, e.g. ``eval: node 4: ...``.

"""

from __future__ import annotations


class ShapeError(ValueError):
    """
    Operand shapes do not conform to an operation signature

    """


class NumericError(ArithmeticError):
    """
    A computed value is not finite

    Attributes:
        index (int): the node (or step) that produced the value

    """

    def __init__(self, msg: str, index: int = -1) -> None:
        super().__init__(msg)
        self.index = index


class GraphParseError(SyntaxError):
    """
    Malformed graph text. ``lineno`` and ``offset`` locate the
    offending token (both 1-based).

    """

    def __init__(self, msg: str, lineno: int, offset: int = 1) -> None:
        super().__init__(f'{msg} (line {lineno}, column {offset})')
        self.lineno = lineno
        self.offset = offset


class MissingRuleError(NotImplementedError):
    pass


class IndefiniteError(ArithmeticError):
    """
    Conjugate gradient met a direction with non-positive curvature

    Attributes:
        curvature (float): the value of <p, Hp>

    """

    def __init__(self, msg: str, curvature: float = 0.0) -> None:
        super().__init__(msg)
        self.curvature = curvature


class ConvergenceError(RuntimeError):
    """
    An iterative solver stopped before reaching its tolerance

    Attributes:
        residual (float): the norm of the last residual

    """

    def __init__(self, msg: str, residual: float = float('nan')) -> None:
        super().__init__(msg)
        self.residual = residual


class CheckFailedError(Exception):
    """
    A command ran but its check did not pass.
    The command output is kept so it can still be printed.

    """

    def __init__(self, msg: str, output: str = '') -> None:
        super().__init__(msg)
        self.output = output
