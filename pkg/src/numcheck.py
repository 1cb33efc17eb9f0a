"""
Finite-difference and complex-step derivative oracles

"""

from __future__ import annotations
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Any, Callable, Optional
import logging

import numpy as np

from .errors import NumericError
from .estimators import makeRng
from .graph import LinearMap

logger = logging.getLogger(__name__)

FD_KINDS = ('forward', 'backward', 'central')
MAX_STENCIL = 12


@dataclass(frozen=True)
class FDScheme:
    """
    A finite-difference scheme

    Attributes:
        kind (str): forward (offsets 0..p), backward (-p..0)
            or central (-p..p)
        delta (Optional[float]): step; None picks 1e-5 (1 + |w|)
        accuracy (int): stencil extent p
        derivative (int): derivative order k

    """

    kind: str = 'central'
    delta: Optional[float] = None
    accuracy: int = 1
    derivative: int = 1

    def __post_init__(self) -> None:
        if self.kind not in FD_KINDS:
            raise ValueError(
                f'fd: unknown scheme {self.kind}, '
                f'choose from {", ".join(FD_KINDS)}')
        if self.delta is not None and not self.delta > 0:
            raise ValueError(f'fd: delta must be positive, got {self.delta}')
        if self.accuracy < 1 or self.derivative < 1:
            raise ValueError('fd: accuracy and derivative orders must be >= 1')

    @property
    def offsets(self) -> list:
        return fdStencil(self.kind, self.accuracy)

    @property
    def coefficients(self) -> list:
        return fdCoefficients(self.kind, self.accuracy, self.derivative)


def fdStencil(kind: str, p: int) -> list:
    if kind == 'forward':
        return list(range(0, p + 1))
    if kind == 'backward':
        return list(range(-p, 1))
    return list(range(-p, p + 1))


def _solveRational(matrix: list, rhs: list) -> Optional[list]:
    """
    Gauss-Jordan elimination over Fractions; None if singular

    """

    n = len(rhs)
    rows = [[Fraction(v) for v in row] + [Fraction(b)]
            for row, b in zip(matrix, rhs)]

    for col in range(n):
        pivot = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if pivot is None:
            return None
        rows[col], rows[pivot] = rows[pivot], rows[col]

        lead = rows[col][col]
        rows[col] = [v / lead for v in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]

    return [row[n] for row in rows]


def fdCoefficients(kind: str, p: int, k: int) -> list:
    """
    Stencil weights a_i with Σ a_i f(w + iδv) / δ^k ≈ ∂^k f(w)[v, .., v]

    The weights solve Σ_i a_i i^j = k! [j = k] for j over the
    stencil size. The system is solved exactly in rationals, so each
    weight is the float nearest its exact value.

    Args:
        kind (str): forward, backward or central
        p (int): stencil extent
        k (int): derivative order

    Returns:
        list[float]: one weight per offset of ``fdStencil(kind, p)``

    Raises:
        ValueError: the stencil is too short for the order or the
            system is singular

    """

    if kind not in FD_KINDS:
        raise ValueError(f'fd_coefficients: unknown scheme {kind}')

    offsets = fdStencil(kind, p)
    n = len(offsets)
    if k >= n:
        raise ValueError(
            f'fd_coefficients: {n} points cannot resolve a derivative '
            f'of order {k}')
    if n > MAX_STENCIL:
        raise ValueError(
            f'fd_coefficients: stencil of {n} points exceeds {MAX_STENCIL}')

    vander = [[i ** j for i in offsets] for j in range(n)]
    rhs = [factorial(k) if j == k else 0 for j in range(n)]

    a = _solveRational(vander, rhs)
    if a is None:
        raise ValueError(f'fd_coefficients: singular system for {kind} '
                         f'p={p} k={k}')

    return [float(c) for c in a]


def defaultDelta(w: Any) -> float:
    return 1e-5 * (1.0 + float(np.max(np.abs(w), initial=0.0)))


def directionalDerivative(f: Callable, w: Any, v: Any,
                          scheme: Optional[FDScheme] = None) -> float:
    """
    Finite-difference approximation of ∂^k f(w)[v, ..., v]

    Raises:
        NumericError: f is not finite at a stencil point

    """

    scheme = scheme or FDScheme()
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    delta = scheme.delta if scheme.delta is not None else defaultDelta(w)

    total = 0.0
    for i, a in zip(scheme.offsets, scheme.coefficients):
        if a == 0.0:
            continue
        fi = float(f(w + i * delta * v))
        if not np.isfinite(fi):
            raise NumericError(
                f'directional_derivative: f is not finite at offset {i}', i)
        total += a * fi

    return total / delta ** scheme.derivative


def complexStep(fComplex: Callable, w: Any, v: Any,
                delta: float = 1e-20) -> float:
    """
    Directional derivative Im(f(w + iδv)) / δ

    Raises:
        TypeError: f does not propagate complex inputs

    """

    z = np.asarray(w, dtype=np.complex128) + 1j * delta * np.asarray(v)
    try:
        out = fComplex(z)
    except TypeError as e:
        raise TypeError(f'complex_step: f is not complex-evaluable: {e}')

    if not np.iscomplexobj(out):
        raise TypeError('complex_step: f is not complex-evaluable')

    return float(np.imag(out)) / delta


@dataclass
class GradcheckReport:
    """
    Per-coordinate comparison of a gradient with central differences

    Attributes:
        rows (list[tuple]): (index, analytic, numeric, error)
        tol (float): the tolerance
        maxError (float): the largest relative error
        worstIndex (int): where it happened, -1 for an empty input

    """

    rows: list = field(default_factory=list)
    tol: float = 1e-6
    maxError: float = 0.0
    worstIndex: int = -1

    @property
    def passed(self) -> bool:
        return self.maxError < self.tol

    def format(self) -> str:
        lines = [f'{"index":>6} {"analytic":>14} {"numeric":>14} '
                 f'{"error":>10}']
        for i, an, num, err in self.rows:
            lines.append(f'{i:>6} {an:>14.8g} {num:>14.8g} {err:>10.3e}')
        status = 'PASS' if self.passed else 'FAIL'
        lines.append(f'max error {self.maxError:.3e} at index '
                     f'{self.worstIndex}: {status} (tol {self.tol:g})')
        return '\n'.join(lines)

    __str__ = format


def relativeError(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def gradcheck(f: Callable, gradF: Callable, w: Any,
              tol: float = 1e-6) -> GradcheckReport:
    """
    Compare ``gradF(w)`` with a central difference per coordinate.
    Failures are reported, not raised.

    Args:
        f (Callable): scalar function
        gradF (Callable): its claimed gradient
        w (Any): the point
        tol (float): pass when the largest relative error is below it

    Returns:
        GradcheckReport: the comparison

    """

    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(gradF(w), dtype=np.float64).ravel()
    flat = w.ravel()

    report = GradcheckReport(tol=tol)
    for i in range(flat.size):
        e = np.zeros(flat.size)
        e[i] = 1.0
        scheme = FDScheme('central', delta=1e-5 * (1.0 + abs(flat[i])))
        num = directionalDerivative(f, w, e.reshape(w.shape), scheme)
        err = relativeError(float(g[i]), num)
        report.rows.append((i, float(g[i]), num, err))

        if err > report.maxError or report.worstIndex < 0:
            report.maxError, report.worstIndex = err, i

    logger.debug('gradcheck: max error %.3e at %d',
                 report.maxError, report.worstIndex)
    return report


def checkAdjoint(op: LinearMap, trials: int = 10, seed: int = 0) -> float:
    """
    Largest residual of <A v, u> = <v, A* u> over random pairs,
    relative to ||A v|| ||u||

    """

    rng = makeRng(seed)
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(op.inShape)
        u = rng.standard_normal(op.outShape)
        av, au = op.apply(v), op.adjointApply(u)
        lhs, rhs = float(np.vdot(av, u)), float(np.vdot(v, au))
        scale = max(float(np.linalg.norm(av) * np.linalg.norm(u)),
                    float(np.linalg.norm(v) * np.linalg.norm(au)), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
