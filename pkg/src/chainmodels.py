"""
Inference on chain-structured models

A chain of K variables with M states each is scored by log-potentials
θ of shape (K, M, M): θ[0, 0, j] scores s_1 = j (rows i > 0 of the first
step are unused) and θ[k, i, j] scores the transition s_k = i to
s_{k+1} = j. Indices are 0-based everywhere.

All messages are kept in the log domain.

"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Callable, Optional, Union
import csv
import io
import logging

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ShapeError

logger = logging.getLogger(__name__)


def _checkTheta(op: str, theta: Any) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 3 or theta.shape[1] != theta.shape[2] \
            or min(theta.shape) < 1:
        raise ShapeError(
            f'{op}: θ must have shape (K, M, M), got {theta.shape}')
    if not np.all(np.isfinite(theta)):
        raise ValueError(f'{op}: θ has non-finite entries')
    return theta


@dataclass(frozen=True, eq=False)
class ChainPosterior:
    """
    Everything forward-backward and Viterbi know about a chain

    Attributes:
        logAlpha (np.ndarray): K×M forward messages
        logBeta (np.ndarray): K×M backward messages
        logPartition (float): A(θ) = log Z
        unary (np.ndarray): K×M marginals P(s_k = j)
        pairwise (np.ndarray): K×M×M marginals, ∇A(θ)
        path (np.ndarray): the Viterbi path
        score (float): its score
        backpointers (np.ndarray): K×M, row 0 unused

    """

    logAlpha: np.ndarray
    logBeta: np.ndarray
    logPartition: float
    unary: np.ndarray
    pairwise: np.ndarray
    path: np.ndarray
    score: float
    backpointers: np.ndarray

    @property
    def partitionFromEnd(self) -> float:
        return float(logsumexp(self.logAlpha[-1] + self.logBeta[-1]))

    @property
    def partitionFromStart(self) -> float:
        return float(logsumexp(self.logAlpha[0] + self.logBeta[0]))


def _forwardMessages(theta: np.ndarray) -> np.ndarray:
    K, M, _ = theta.shape
    alpha = np.empty((K, M))
    alpha[0] = theta[0, 0]
    for k in range(1, K):
        alpha[k] = logsumexp(theta[k] + alpha[k - 1][:, None], axis=0)
    return alpha


def _backwardMessages(theta: np.ndarray) -> np.ndarray:
    K, M, _ = theta.shape
    beta = np.zeros((K, M))
    for k in range(K - 2, -1, -1):
        beta[k] = logsumexp(theta[k + 1] + beta[k + 1][None, :], axis=1)
    return beta


def _viterbi(theta: np.ndarray) -> tuple:
    K, M, _ = theta.shape
    delta = theta[0, 0].copy()
    q = np.zeros((K, M), dtype=np.int64)
    for k in range(1, K):
        scores = theta[k] + delta[:, None]
        q[k] = np.argmax(scores, axis=0)
        delta = scores[q[k], np.arange(M)]

    path = np.zeros(K, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for k in range(K - 1, 0, -1):
        path[k - 1] = q[k, path[k]]
    return path, float(delta[path[-1]]), q


def forwardBackward(theta: Any) -> ChainPosterior:
    """
    Marginal inference on a chain

    Args:
        theta (Any): log-potentials of shape (K, M, M)

    Returns:
        ChainPosterior: messages, log-partition, marginals and the
            Viterbi path

    Raises:
        ShapeError: θ is not (K, M, M)
        ValueError: θ has non-finite entries

    """

    theta = _checkTheta('forward_backward', theta)
    K, M, _ = theta.shape

    alpha = _forwardMessages(theta)
    beta = _backwardMessages(theta)
    logZ = float(logsumexp(alpha[-1]))

    unary = np.exp(alpha + beta - logZ)
    pairwise = np.zeros_like(theta)
    pairwise[0, 0] = unary[0]
    for k in range(1, K):
        pairwise[k] = np.exp(alpha[k - 1][:, None] + theta[k]
                             + beta[k][None, :] - logZ)

    path, score, q = _viterbi(theta)
    logger.debug('forward_backward: K=%d M=%d A=%.6g', K, M, logZ)
    return ChainPosterior(alpha, beta, logZ, unary, pairwise, path, score, q)


def viterbi(theta: Any) -> tuple:
    """
    MAP path of a chain; ties go to the lowest state

    Returns:
        np.ndarray: the path s_1..s_K
        float: its score Σ_k θ[k, s_k, s_{k+1}]

    """

    path, score, _ = _viterbi(_checkTheta('viterbi', theta))
    return path, score


def pathScore(theta: Any, path: Any) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    score = theta[0, 0, path[0]]
    for k in range(1, len(path)):
        score += theta[k, path[k - 1], path[k]]
    return float(score)


@dataclass(frozen=True)
class Semiring:
    """
    A commutative semiring over reals

    Attributes:
        name (str): sum_product, max_plus or logsumexp
        eps (float): temperature of logsumexp, ε·log Σ exp(·/ε)

    """

    name: str
    eps: float = 1.0

    def __post_init__(self) -> None:
        if self.name not in SEMIRINGS:
            raise ValueError(
                f'semiring: unknown selector {self.name}, '
                f'choose from {", ".join(SEMIRINGS)}')
        if self.name == 'logsumexp' and not self.eps > 0:
            raise ValueError(f'semiring: ε must be positive, got {self.eps}')

    @property
    def zero(self) -> float:
        return 0.0 if self.name == 'sum_product' else -np.inf

    @property
    def one(self) -> float:
        return 1.0 if self.name == 'sum_product' else 0.0

    def lift(self, theta: np.ndarray) -> np.ndarray:
        return np.exp(theta) if self.name == 'sum_product' else theta

    def plus(self, a: Any, b: Any) -> Any:
        return self.sum(np.stack([np.asarray(a, dtype=np.float64),
                                  np.asarray(b, dtype=np.float64)]), axis=0)

    def times(self, a: Any, b: Any) -> Any:
        if self.name == 'sum_product':
            return np.multiply(a, b)
        return np.add(a, b)

    def sum(self, x: np.ndarray, axis: Optional[int] = None) -> Any:
        if self.name == 'sum_product':
            return np.sum(x, axis=axis)
        if self.name == 'max_plus':
            return np.max(x, axis=axis)
        return self.eps * logsumexp(np.asarray(x) / self.eps, axis=axis)


SEMIRINGS = ('sum_product', 'max_plus', 'logsumexp')


def semiringForward(theta: Any,
                    semiring: Union[str, Semiring] = 'logsumexp') -> float:
    """
    ⊕ over all paths of the ⊗-product of potentials

    sum_product gives Z, max_plus the Viterbi score and logsumexp(ε)
    gives ε·A(θ/ε).

    """

    if isinstance(semiring, str):
        semiring = Semiring(semiring)
    psi = semiring.lift(_checkTheta('semiring_forward', theta))

    a = psi[0, 0]
    for k in range(1, psi.shape[0]):
        a = semiring.sum(semiring.times(psi[k], a[:, None]), axis=0)
    return float(semiring.sum(a))


def marginalsViaGrad(theta: Any, eps: Optional[float] = 1.0) -> np.ndarray:
    """
    Pairwise marginals as the gradient of the smoothed max-value program

    The forward pass computes v_k(j) = max_ε,i θ[k, i, j] + v_{k-1}(i)
    and keeps q_k(j) = ∇max_ε, the softargmax of its arguments. Reverse
    mode then gives μ[k, i, j] = r_k(j) q_k(j, i) with r_{k-1} = Σ_j μ[k].
    With ε = 1 this is ∇A(θ); with ε = None the max is hard and the
    result encodes the Viterbi path.

    Args:
        theta (Any): log-potentials of shape (K, M, M)
        eps (Optional[float]): temperature, None for the hard max

    Returns:
        np.ndarray: μ of shape (K, M, M)

    """

    theta = _checkTheta('marginals_via_grad', theta)
    if eps is not None and not eps > 0:
        raise ValueError(f'marginals_via_grad: ε must be positive, got {eps}')
    K, M, _ = theta.shape

    def grad(x: np.ndarray, axis: int) -> np.ndarray:
        if eps is not None:
            return softmax(x / eps, axis=axis)
        out = np.zeros_like(x)
        idx = np.expand_dims(np.argmax(x, axis=axis), axis)
        np.put_along_axis(out, idx, 1.0, axis=axis)
        return out

    v = theta[0, 0]
    qs = [None]
    for k in range(1, K):
        scores = theta[k] + v[:, None]
        qs.append(grad(scores, axis=0))
        v = (np.max(scores, axis=0) if eps is None
             else eps * logsumexp(scores / eps, axis=0))

    mu = np.zeros_like(theta)
    r = grad(v, axis=0)
    for k in range(K - 1, 0, -1):
        mu[k] = qs[k] * r[None, :]
        r = np.sum(mu[k], axis=1)
    mu[0, 0] = r
    return mu


def loadThetaCsv(source: Union[str, io.TextIOBase]) -> np.ndarray:
    """
    Read θ from ``k,i,j,value`` rows with a header. The shape is
    inferred from the largest indices; missing entries are 0.

    Args:
        source (Union[str, io.TextIOBase]): a path or an open stream

    Raises:
        ValueError: malformed rows or no rows at all

    """

    if isinstance(source, str):
        with open(source, newline='') as f:
            return loadThetaCsv(f)

    rows = []
    for lineno, row in enumerate(csv.DictReader(source), start=2):
        try:
            rows.append((int(row['k']), int(row['i']), int(row['j']),
                         float(row['value'])))
        except (KeyError, TypeError, ValueError):
            raise ValueError(f'theta: line {lineno}: expected k,i,j,value')

    if not rows:
        raise ValueError('theta: no entries')
    idx = np.array([r[:3] for r in rows])
    if np.any(idx < 0):
        raise ValueError('theta: negative index')

    K = int(idx[:, 0].max()) + 1
    M = int(idx[:, 1:].max()) + 1
    theta = np.zeros((K, M, M))
    for k, i, j, value in rows:
        theta[k, i, j] = value
    return theta


def dumpMarginalsCsv(unary: np.ndarray,
                     fmt: Callable[[float], str] = repr) -> str:
    lines = ['k,state,marginal']
    for k, row in enumerate(unary):
        lines += [f'{k},{j},{fmt(float(p))}' for j, p in enumerate(row)]
    return '\n'.join(lines)
