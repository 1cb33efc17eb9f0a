"""
Smoothed and relaxed operators.

Three families are supported, named by the regularizer they come from:

    shannon (alias logistic) -- softplus, logistic, logsumexp, softargmax
    gini (alias sparse) -- sparseplus, sparsesigmoid, sparsemax, sparseargmax
    gaussian (alias gauss) -- convolution with a Gaussian kernel

"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence, Union
import io
import logging

import numpy as np
from scipy.ndimage import convolve1d
from scipy.special import entr, expit, logsumexp, ndtr, rel_entr, softmax

logger = logging.getLogger(__name__)

FAMILY_ALIASES = {
    'shannon': 'shannon', 'logistic': 'shannon',
    'gini': 'gini', 'sparse': 'gini',
    'gaussian': 'gaussian', 'gauss': 'gaussian',
}

SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class SmoothKind:
    """
    A smoothing family with its scale (or temperature)

    """

    family: str
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in FAMILY_ALIASES:
            raise ValueError(
                f'smooth: unknown family {self.family}, '
                f'choose from {", ".join(sorted(FAMILY_ALIASES))}')
        if not self.scale > 0:
            raise ValueError(
                f'smooth: scale must be positive, got {self.scale}')
        object.__setattr__(self, 'family', FAMILY_ALIASES[self.family])


def _kind(kind: Union[str, SmoothKind], scale: float) -> SmoothKind:
    if isinstance(kind, SmoothKind):
        return kind
    return SmoothKind(kind, scale)


def gaussianPdf(u: Any) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return np.exp(-0.5 * u * u) / SQRT_2PI


def sparseplus(u: Any) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return np.where(u <= -1.0, 0.0,
                    np.where(u >= 1.0, u, 0.25 * (u + 1.0) ** 2))


def sparsesigmoid(u: Any) -> np.ndarray:
    return np.clip(0.5 * (np.asarray(u, dtype=np.float64) + 1.0), 0.0, 1.0)


def smoothedRelu(kind: Union[str, SmoothKind], u: Any,
                 scale: float = 1.0) -> tuple:
    """
    Smoothed ReLU and its derivative

    Args:
        kind (Union[str, SmoothKind]): shannon (σ softplus(u/σ)),
            gini (σ sparseplus(u/σ)) or gaussian (u Φ(u/σ) + σ φ(u/σ))
        u (Any): the argument
        scale (float): σ > 0

    Returns:
        np.ndarray: the value
        np.ndarray: the derivative, the matching smoothed step

    """

    k = _kind(kind, scale)
    s = k.scale
    u = np.asarray(u, dtype=np.float64)
    z = u / s

    if k.family == 'shannon':
        value = s * np.logaddexp(0.0, z)
    elif k.family == 'gini':
        value = s * sparseplus(z)
    else:
        value = u * ndtr(z) + s * gaussianPdf(z)

    return value, smoothedStep(k, u)


def smoothedStep(kind: Union[str, SmoothKind], u: Any,
                 scale: float = 1.0) -> np.ndarray:
    """
    Smoothed Heaviside step with values in [0, 1]

    """

    k = _kind(kind, scale)
    z = np.asarray(u, dtype=np.float64) / k.scale

    if k.family == 'shannon':
        return expit(z)
    if k.family == 'gini':
        return sparsesigmoid(z)
    return ndtr(z)


def _vector(op: str, u: Any) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or u.size == 0:
        raise ValueError(
            f'{op}: expected a non-empty vector, got shape {u.shape}')
    return u


def simplexThreshold(u: Any) -> float:
    """
    τ* such that Σ [u_i - τ*]₊ = 1, by sorting

    """

    u = _vector('simplex_project', u)
    srt = np.sort(u)[::-1]
    css = np.cumsum(srt) - 1.0
    ind = np.arange(1, u.size + 1)
    rho = np.nonzero(srt - css / ind > 0)[0][-1]
    return float(css[rho] / (rho + 1))


def simplexProject(u: Any) -> np.ndarray:
    """
    Euclidean projection onto the probability simplex

    """

    u = _vector('simplex_project', u)
    return np.maximum(u - simplexThreshold(u), 0.0)


def _sparsemax(u: np.ndarray) -> float:
    pi = simplexProject(u)
    return float(np.dot(u, pi) - 0.5 * np.dot(pi, pi) + 0.5)


def _vectorKind(op: str, kind: Union[str, SmoothKind],
                temperature: float) -> SmoothKind:
    k = _kind(kind, temperature)
    if k.family == 'gaussian':
        raise ValueError(f'{op}: no gaussian family for vectors')
    return k


def softmaxValue(kind: Union[str, SmoothKind], u: Any,
                 temperature: float = 1.0) -> float:
    """
    Smoothed max: γ·logsumexp(u/γ) (shannon) or γ·sparsemax(u/γ) (gini)

    Raises:
        ValueError: empty vector

    """

    k = _vectorKind('softmax_value', kind, temperature)
    u = _vector('softmax_value', u)
    g = k.scale
    if k.family == 'shannon':
        return float(g * logsumexp(u / g))
    return g * _sparsemax(u / g)


def softminValue(kind: Union[str, SmoothKind], u: Any,
                 temperature: float = 1.0) -> float:
    return -softmaxValue(kind, -np.asarray(u, dtype=np.float64), temperature)


def argmaxRelaxed(kind: Union[str, SmoothKind], u: Any,
                  temperature: float = 1.0) -> np.ndarray:
    """
    Gradient of ``softmaxValue``: softargmax or sparseargmax

    """

    k = _vectorKind('argmax_relaxed', kind, temperature)
    u = _vector('argmax_relaxed', u) / k.scale
    if k.family == 'shannon':
        return softmax(u)
    return simplexProject(u)


def hardArgmax(u: Any) -> np.ndarray:
    """
    One-hot argmax; ties go to the lowest index

    """

    u = _vector('argmax', u)
    out = np.zeros_like(u)
    out[int(np.argmax(u))] = 1.0
    return out


PROX_TAGS = ('l1', 'scaled_l2', 'group_l1')


def _checkGroups(groups: Optional[Sequence], n: int) -> list:
    if groups is None:
        raise ValueError('prox: group_l1 needs a group partition')

    groups = [np.asarray(g, dtype=int) for g in groups]
    seen = np.concatenate(groups) if groups else np.array([], dtype=int)
    if seen.size != n or not np.array_equal(np.sort(seen), np.arange(n)):
        raise ValueError(
            f'prox: groups must partition the {n} coordinates exactly once')
    return groups


def prox(tag: str, v: Any, scale: float,
         groups: Optional[Sequence] = None) -> np.ndarray:
    """
    Proximal operator of scale·Ω

    Args:
        tag (str): l1 (soft-thresholding), scaled_l2 (Ω = ½||·||²)
            or group_l1 (Σ_g ||v_g||₂)
        v (Any): the point
        scale (float): λγ >= 0
        groups (Optional[Sequence]): index sets partitioning v,
            for group_l1

    Raises:
        ValueError: unknown tag, negative scale or malformed groups

    """

    if tag not in PROX_TAGS:
        raise ValueError(
            f'prox: unknown tag {tag}, choose from {", ".join(PROX_TAGS)}')
    if scale < 0:
        raise ValueError(f'prox: scale must be >= 0, got {scale}')

    v = np.asarray(v, dtype=np.float64)

    if tag == 'l1':
        return np.sign(v) * np.maximum(np.abs(v) - scale, 0.0)
    if tag == 'scaled_l2':
        return v / (1.0 + scale)

    out = np.zeros_like(v)
    for g in _checkGroups(groups, v.size):
        norm = np.linalg.norm(v[g])
        if norm > 0:
            out[g] = max(1.0 - scale / norm, 0.0) * v[g]
    return out


@dataclass(frozen=True)
class ProxOracle:
    tag: str
    groups: Optional[tuple] = None

    def prox(self, v: Any, scale: float = 1.0) -> np.ndarray:
        return prox(self.tag, v, scale, self.groups)

    def value(self, v: Any) -> float:
        v = np.asarray(v, dtype=np.float64)
        if self.tag == 'l1':
            return float(np.sum(np.abs(v)))
        if self.tag == 'scaled_l2':
            return 0.5 * float(np.dot(np.ravel(v), np.ravel(v)))
        return float(sum(np.linalg.norm(v[g])
                         for g in _checkGroups(self.groups, v.size)))

    __call__ = prox


def moreauEnvelope(proxOp: Union[ProxOracle, Callable], fValue: Callable,
                   mu: Any) -> tuple:
    """
    Moreau envelope env_f(μ) = min_v f(v) + ½||μ - v||²

    Args:
        proxOp (Union[ProxOracle, Callable]): μ -> prox_f(μ)
        fValue (Callable): f
        mu (Any): the point

    Returns:
        float: f(prox(μ)) + ½||μ - prox(μ)||²
        np.ndarray: the gradient μ - prox(μ)

    """

    mu = np.asarray(mu, dtype=np.float64)
    p = np.asarray(proxOp(mu), dtype=np.float64)
    d = mu - p
    return float(fValue(p)) + 0.5 * float(np.sum(d * d)), d


def huber(u: Any) -> np.ndarray:
    """
    Moreau envelope of |·|

    """

    a = np.abs(np.asarray(u, dtype=np.float64))
    return np.where(a <= 1.0, 0.5 * a * a, a - 0.5)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    A function sampled on a strictly increasing grid

    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError('grid: expected a non-empty 1-d grid')
        if values.shape != grid.shape:
            raise ValueError(
                f'grid: {grid.size} points but {values.size} values')
        if np.any(np.diff(grid) <= 0):
            raise ValueError('grid: points must be strictly increasing')
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'values', values)

    @staticmethod
    def sample(f: Callable, grid: Any) -> GridFunction:
        grid = np.asarray(grid, dtype=np.float64)
        return GridFunction(grid, np.asarray(f(grid), dtype=np.float64))

    def toCsv(self) -> str:
        lines = ['x,f'] + [f'{x:.12g},{y:.12g}'
                           for x, y in zip(self.grid, self.values)]
        return '\n'.join(lines)

    @staticmethod
    def fromCsv(text: str) -> GridFunction:
        data = np.loadtxt(io.StringIO(text), delimiter=',', skiprows=1,
                          ndmin=2)
        return GridFunction(data[:, 0], data[:, 1])


def discreteConjugate(f: GridFunction, dualGrid: Any,
                      sentinel: float = 1e30,
                      extrapolate: bool = False) -> GridFunction:
    """
    Discrete Legendre-Fenchel transform f*(v) = max_i u_i v - f(u_i)

    By default every slope gets the finite grid maximum, the conjugate
    of f restricted to the grid. Pass ``extrapolate`` to get the
    conjugate of f continued affinely past the grid, where slopes with
    an unbounded supremum become ``sentinel``; for an affine
    f(u) = au + b this gives f*(a) = -b and ``sentinel`` elsewhere.

    Args:
        f (GridFunction): samples of f
        dualGrid (Any): slopes v to evaluate at
        sentinel (float): stands for +∞
        extrapolate (bool): report ``sentinel`` where the maximizer sits
            strictly on a grid end; off by default

    """

    dual = np.asarray(dualGrid, dtype=np.float64)
    scores = np.outer(dual, f.grid) - f.values[None, :]
    best = np.argmax(scores, axis=1)
    conj = scores[np.arange(dual.size), best]

    if extrapolate and f.grid.size > 1:
        last = f.grid.size - 1
        atLow = (best == 0) & (scores[:, 0] > scores[:, 1])
        atHigh = (best == last) & (scores[:, last] > scores[:, last - 1])
        conj = np.where(atLow | atHigh, sentinel, conj)

    return GridFunction(dual, conj)


def _uniformSpacing(grid: np.ndarray) -> float:
    if grid.size < 2:
        return 1.0
    steps = np.diff(grid)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError('gaussian_conv_1d: grid is not uniform')
    return float(steps[0])


def gaussianKernel(sigma: float, spacing: float) -> np.ndarray:
    """
    Gaussian weights on the grid offsets within ±4σ, summing to 1

    """

    radius = int(np.floor(4.0 * sigma / spacing))
    x = np.arange(-radius, radius + 1) * spacing / sigma
    w = np.exp(-0.5 * x * x)
    return w / w.sum()


def gaussianConv1d(signal: GridFunction, sigma: float) -> GridFunction:
    """
    Convolve samples with a renormalized Gaussian kernel. Values
    beyond the ends repeat the end values.

    Raises:
        ValueError: σ <= 0 or a non-uniform grid

    """

    if not sigma > 0:
        raise ValueError(
            f'gaussian_conv_1d: sigma must be positive, got {sigma}')

    kernel = gaussianKernel(sigma, _uniformSpacing(signal.grid))
    out = convolve1d(signal.values, kernel, mode='nearest')
    return GridFunction(signal.grid, out)


FY_TAGS = ('shannon_simplex', 'gini_simplex', 'half_sq_l2')


def _checkSimplex(op: str, t: np.ndarray) -> None:
    if np.any(t < 0) or abs(float(t.sum()) - 1.0) > 1e-9:
        raise ValueError(f'{op}: target is not in the probability simplex')


def fyLoss(tag: str, theta: Any, target: Any) -> tuple:
    """
    Fenchel-Young loss Ω*(θ) + Ω(t) - <θ, t>, gradient ∇Ω*(θ) - t

    Raises:
        ValueError: unknown tag or target outside dom(Ω)

    """

    if tag not in FY_TAGS:
        raise ValueError(
            f'fy_loss: unknown tag {tag}, choose from {", ".join(FY_TAGS)}')

    theta = np.asarray(theta, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if theta.shape != t.shape:
        raise ValueError(
            f'fy_loss: θ has shape {theta.shape}, target {t.shape}')

    if tag == 'half_sq_l2':
        d = theta - t
        return 0.5 * float(np.dot(d, d)), d

    _checkSimplex('fy_loss', t)
    if tag == 'shannon_simplex':
        omegaT = -float(np.sum(entr(t)))
        value = float(logsumexp(theta)) + omegaT - float(np.dot(theta, t))
        return max(value, 0.0), softmax(theta) - t

    omegaT = 0.5 * float(np.dot(t, t)) - 0.5
    value = _sparsemax(theta) + omegaT - float(np.dot(theta, t))
    return max(value, 0.0), simplexProject(theta) - t


def klDivergence(p: Any, q: Any) -> float:
    """
    KL(p, q) = Σ p_i log(p_i / q_i), with 0 log 0 = 0

    """

    return float(np.sum(rel_entr(np.asarray(p, dtype=np.float64),
                                 np.asarray(q, dtype=np.float64))))


def bregmanDivergence(tag: str, p: Any, q: Any) -> float:
    """
    Bregman divergence of the shannon negentropy (KL on the simplex)
    or of ½||·||² (half squared distance)

    """

    if tag == 'shannon_simplex':
        return klDivergence(p, q)
    if tag == 'half_sq_l2':
        d = np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)
        return 0.5 * float(np.dot(d, d))
    raise ValueError(f'bregman: unknown generator {tag}')
