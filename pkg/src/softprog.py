"""
Soft versions of program constructs and data structures.

Comparisons return a SoftBool, a float in [0, 1]. Conditionals and loops
take such probabilities and return expectations over the branches; a hard
probability (exactly 0 or 1, or a one-hot vector) evaluates only the branch
that is taken. Branch values may be passed as callables for that reason.

"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Callable, Sequence
import logging

import numpy as np
from scipy.special import expit, ndtr, softmax

from .errors import ShapeError

logger = logging.getLogger(__name__)

GT_KINDS = ('logistic', 'gauss')
EQ_KERNELS = ('gaussian', 'logistic')
NORM_KINDS = ('probabilistic', 'extremum', 'lukasiewicz')

SIMPLEX_TOL = 1e-9


def _checkSigma(op: str, sigma: float) -> None:
    if not sigma > 0:
        raise ValueError(f'{op}: sigma must be positive, got {sigma}')


def _checkProb(op: str, pi: Any) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if np.any(np.isnan(pi)) or np.any(pi < 0.0) or np.any(pi > 1.0):
        raise ValueError(f'{op}: probabilities must lie in [0, 1]')
    return pi


def _checkSimplex(op: str, pi: Any) -> np.ndarray:
    pi = _checkProb(op, np.ravel(pi))
    if abs(float(np.sum(pi)) - 1.0) > SIMPLEX_TOL:
        raise ValueError(f'{op}: weights must sum to 1, got {np.sum(pi)}')
    return pi


def _value(v: Any) -> np.ndarray:
    return np.asarray(v() if callable(v) else v, dtype=np.float64)


def softGt(kind: str, mu1: Any, mu2: Any, sigma: float = 1.0) -> Any:
    """
    Soft μ1 > μ2: sigmoid_σ(μ1 - μ2)

    Args:
        kind (str): logistic or gauss (the standard normal CDF)
        mu1 (Any): left operand
        mu2 (Any): right operand
        sigma (float): temperature

    Returns:
        Any: a probability, elementwise for arrays

    """

    _checkSigma('soft_gt', sigma)
    z = (np.asarray(mu1, dtype=np.float64) - mu2) / sigma
    if kind == 'logistic':
        return expit(z)
    if kind == 'gauss':
        return ndtr(z)
    raise ValueError(
        f'soft_gt: unknown kind {kind}, choose from {", ".join(GT_KINDS)}')


def softLt(kind: str, mu1: Any, mu2: Any, sigma: float = 1.0) -> Any:
    return softGt(kind, mu2, mu1, sigma)


def softEq(kernel: str, mu1: Any, mu2: Any, sigma: float = 1.0) -> Any:
    """
    Soft equality κ_σ(μ1 - μ2) / κ_σ(0), equal to 1 on ties

    """

    _checkSigma('soft_eq', sigma)
    z = (np.asarray(mu1, dtype=np.float64) - mu2) / sigma
    if kernel == 'gaussian':
        return np.exp(-0.5 * z * z)
    if kernel == 'logistic':
        s = expit(z)
        return 4.0 * s * (1.0 - s)
    raise ValueError(
        f'soft_eq: unknown kernel {kernel}, '
        f'choose from {", ".join(EQ_KERNELS)}')


def softNot(pi: Any) -> Any:
    return 1.0 - _checkProb('soft_not', pi)


def _checkNorm(op: str, kind: str) -> None:
    if kind not in NORM_KINDS:
        raise ValueError(
            f'{op}: unknown kind {kind}, choose from {", ".join(NORM_KINDS)}')


def tnorm(kind: str, a: Any, b: Any) -> Any:
    """
    Soft and of two probabilities

    Raises:
        ValueError: unknown kind or argument outside [0, 1]

    """

    _checkNorm('tnorm', kind)
    a, b = _checkProb('tnorm', a), _checkProb('tnorm', b)
    if kind == 'probabilistic':
        return a * b
    if kind == 'extremum':
        return np.minimum(a, b)
    return np.maximum(a + b - 1.0, 0.0)


def tconorm(kind: str, a: Any, b: Any) -> Any:
    """
    Soft or of two probabilities

    """

    _checkNorm('tconorm', kind)
    a, b = _checkProb('tconorm', a), _checkProb('tconorm', b)
    if kind == 'probabilistic':
        return a + b - a * b
    if kind == 'extremum':
        return np.maximum(a, b)
    return np.minimum(a + b, 1.0)


def softAll(kind: str, args: Sequence) -> float:
    """
    Soft all; an empty argument list is true

    """

    _checkNorm('soft_all', kind)
    pi = _checkProb('soft_all', np.ravel(np.asarray(args, dtype=np.float64)))
    if pi.size == 0:
        return 1.0
    if kind == 'probabilistic':
        return float(np.prod(pi))
    if kind == 'extremum':
        return float(np.min(pi))
    return float(max(np.sum(pi) - (pi.size - 1), 0.0))


def softAny(kind: str, args: Sequence) -> float:
    """
    Soft any; an empty argument list is false

    """

    _checkNorm('soft_any', kind)
    pi = _checkProb('soft_any', np.ravel(np.asarray(args, dtype=np.float64)))
    if pi.size == 0:
        return 0.0
    if kind == 'probabilistic':
        return float(1.0 - np.prod(1.0 - pi))
    if kind == 'extremum':
        return float(np.max(pi))
    return float(min(np.sum(pi), 1.0))


def softIfelse(pi: float, v1: Any, v0: Any) -> np.ndarray:
    """
    π v1 + (1 - π) v0

    Args:
        pi (float): probability of the true branch
        v1 (Any): true branch, a value or a callable producing it
        v0 (Any): false branch, likewise

    Raises:
        ShapeError: the branches have different shapes

    """

    pi = float(_checkProb('soft_ifelse', pi))
    if pi == 1.0:
        return _value(v1)
    if pi == 0.0:
        return _value(v0)

    a, b = _value(v1), _value(v0)
    if a.shape != b.shape:
        raise ShapeError(
            f'soft_ifelse: branch shapes differ, {a.shape} and {b.shape}')
    return pi * a + (1.0 - pi) * b


def branchVariance(pi: float, v1: Any, v0: Any) -> np.ndarray:
    """
    Variance of the branch value under i ~ Bernoulli(π)

    """

    pi = float(_checkProb('branch_variance', pi))
    d = _value(v1) - _value(v0)
    return pi * (1.0 - pi) * d * d


def softCond(pi: Any, values: Sequence) -> np.ndarray:
    """
    Σ π_i v_i over K branches. Branches with zero weight are not evaluated.

    Args:
        pi (Any): a point of the simplex with K entries
        values (Sequence): K values or callables

    Raises:
        ValueError: π is not on the simplex
        ShapeError: K mismatch or branch shapes differ

    """

    pi = _checkSimplex('soft_cond', pi)
    if pi.size != len(values):
        raise ShapeError(
            f'soft_cond: {pi.size} weights for {len(values)} branches')

    out, shape = None, None
    for p, v in zip(pi, values):
        if p == 0.0:
            continue
        x = _value(v)
        if shape is None:
            shape = x.shape
        elif x.shape != shape:
            raise ShapeError(
                f'soft_cond: branch shapes differ, {shape} and {x.shape}')
        out = p * x if out is None else out + p * x
    return out


@dataclass(frozen=True, eq=False)
class StopDistribution:
    """
    Probability that a soft while loop stops at iteration i = 0..T

    """

    probs: np.ndarray

    @property
    def T(self) -> int:
        return self.probs.size - 1

    @property
    def mass(self) -> float:
        return float(np.sum(self.probs))

    def expectedIterations(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))


def softWhile(step: Callable, stopProb: Callable, s0: Any,
              T: int) -> tuple:
    """
    Truncated soft while loop

    The loop runs s_{i+1} = step(s_i) and stops at iteration i with
    probability stopProb(s_i); the probability at i = T is forced to 1.
    The output is Σ_i (Π_{j<i} (1 - π_j)) π_i s_i. Once a hard stop
    happens no further state is computed.

    Args:
        step (Callable): state -> next state
        stopProb (Callable): state -> probability in [0, 1]
        s0 (Any): initial state
        T (int): iteration cap, T >= 0

    Returns:
        np.ndarray: the expected final state
        StopDistribution: the stopping probabilities

    """

    if T < 0:
        raise ValueError(f'soft_while: T must be >= 0, got {T}')

    s = np.asarray(s0, dtype=np.float64)
    weights = np.zeros(T + 1)
    alive = 1.0
    out = None

    for i in range(T + 1):
        pi = 1.0 if i == T else float(_checkProb('soft_while', stopProb(s)))
        weights[i] = alive * pi
        if weights[i] > 0.0:
            out = weights[i] * s if out is None else out + weights[i] * s
        alive *= 1.0 - pi
        if alive == 0.0:
            logger.debug('soft_while: stopped for sure at iteration %d', i)
            break
        s = np.asarray(step(s), dtype=np.float64)

    return out, StopDistribution(weights)


def _flatList(op: str, items: Sequence) -> np.ndarray:
    arr = np.asarray([np.asarray(x, dtype=np.float64) for x in items])
    if arr.ndim == 0 or arr.shape[0] == 0:
        raise ShapeError(f'{op}: empty list')
    return arr


def _flatWeights(op: str, pi: Any, size: int) -> np.ndarray:
    pi = _checkSimplex(op, pi)
    if pi.size != size:
        raise ShapeError(f'{op}: {pi.size} weights for {size} positions')
    return pi


def listSoftGet(items: Sequence, pi: Any) -> np.ndarray:
    """
    Σ_j π_j l_j. A multi-dimensional π indexes the list in row-major order.

    Raises:
        ShapeError: the number of weights is not the list length

    """

    arr = _flatList('list_soft_get', items)
    pi = _flatWeights('list_soft_get', pi, arr.shape[0])
    return np.tensordot(pi, arr, axes=1)


def listSoftSet(items: Sequence, pi: Any, v: Any) -> list:
    """
    New list with entries π_j v + (1 - π_j) l_j

    """

    arr = _flatList('list_soft_set', items)
    pi = _flatWeights('list_soft_set', pi, arr.shape[0])
    v = np.asarray(v, dtype=np.float64)
    if v.shape != arr.shape[1:]:
        raise ShapeError(
            f'list_soft_set: value shape {v.shape}, entries {arr.shape[1:]}')
    return [p * v + (1.0 - p) * x for p, x in zip(pi, arr)]


def listSoftInsert(items: Sequence, pi: Any, v: Any) -> list:
    """
    Insert v at a random position I ~ π in {0, ..., K}

    Entry j of the new list is P(I > j) l_j + P(I = j) v + P(I < j) l_{j-1}.

    Args:
        items (Sequence): K entries
        pi (Any): K + 1 weights on the simplex
        v (Any): the inserted value

    Returns:
        list: K + 1 entries

    """

    arr = _flatList('list_soft_insert', items)
    K = arr.shape[0]
    pi = _flatWeights('list_soft_insert', pi, K + 1)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != arr.shape[1:]:
        raise ShapeError(
            f'list_soft_insert: value shape {v.shape}, '
            f'entries {arr.shape[1:]}')

    before = np.concatenate([[0.0], np.cumsum(pi)[:-1]])
    after = np.concatenate([np.cumsum(pi[::-1])[::-1][1:], [0.0]])

    out = []
    for j in range(K + 1):
        x = pi[j] * v
        if j < K:
            x = x + after[j] * arr[j]
        if j > 0:
            x = x + before[j] * arr[j - 1]
        out.append(x)
    return out


@dataclass(frozen=True, eq=False)
class SoftDict:
    """
    Key-value pairs read through a Gaussian kernel

    Attributes:
        keys (np.ndarray): L keys stacked on the first axis
        values (np.ndarray): L values stacked on the first axis
        sigma (float): kernel scale

    """

    keys: np.ndarray
    values: np.ndarray
    sigma: float = 1.0

    def __post_init__(self) -> None:
        keys = np.asarray(self.keys, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if keys.ndim == 0 or keys.shape[0] == 0:
            raise ValueError('dict_soft_get: empty dictionary')
        if values.ndim == 0 or values.shape[0] != keys.shape[0]:
            raise ShapeError(
                f'soft_dict: {keys.shape[0]} keys, '
                f'{values.shape[0] if values.ndim else 0} values')
        _checkSigma('soft_dict', self.sigma)
        object.__setattr__(self, 'keys', keys)
        object.__setattr__(self, 'values', values)

    def __len__(self) -> int:
        return self.keys.shape[0]

    def weights(self, k: Any) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64)
        if k.shape != self.keys.shape[1:]:
            raise ShapeError(
                f'dict_soft_get: query shape {k.shape}, '
                f'keys {self.keys.shape[1:]}')
        d = (self.keys - k).reshape(len(self), -1)
        return softmax(-0.5 * np.sum(d * d, axis=1) / self.sigma ** 2)

    def get(self, k: Any) -> np.ndarray:
        return np.tensordot(self.weights(k), self.values, axes=1)


def dictSoftGet(d: SoftDict, k: Any) -> np.ndarray:
    """
    Kernel regression read Σ κ_σ(k - k_i) v_i / Σ κ_σ(k - k_i)

    """

    return d.get(k)


def smoothedGate(x: Any, a: float = -1.0, b: float = 1.0,
                 sigma: float = 1.0, mode: str = 'local',
                 y: float = 1.0, z: float = 0.0,
                 kind: str = 'logistic') -> Any:
    """
    Smoothed f(x) = y if a <= x <= b else z

    Args:
        mode (str): local replaces each comparison by a soft one,
            π = π_a π_b; global takes the expectation of the hard program
            under x + σZ, π = P(a <= x + σZ <= b)
        kind (str): logistic or gauss, the sigmoid and the law of Z

    """

    _checkSigma('smoothed_gate', sigma)
    x = np.asarray(x, dtype=np.float64)
    if mode == 'local':
        pi = softGt(kind, x, a, sigma) * softLt(kind, x, b, sigma)
    elif mode == 'global':
        pi = softGt(kind, b, x, sigma) - softGt(kind, a, x, sigma)
    else:
        raise ValueError(f'smoothed_gate: unknown mode {mode}')
    return pi * y + (1.0 - pi) * z
