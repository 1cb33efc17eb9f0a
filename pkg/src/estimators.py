"""
Monte-Carlo gradient estimators.

Randomness comes from counter-based Philox generators; ``splitRngs``
derives independent streams from one seed so batches can be drawn
separately and merged with ``EstimatorReport.combine`` in a fixed order.

"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence, Union
import logging

import numpy as np
from scipy.special import ndtri, softmax

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)


def makeRng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def splitRngs(seed: int, count: int) -> list:
    """
    Independent generators for ``count`` parallel streams

    """

    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


@dataclass(frozen=True)
class EstimatorReport:
    """
    Result of a Monte-Carlo estimator

    Attributes:
        estimate (np.ndarray): the sample mean
        numSamples (int): the number of samples n
        variance (np.ndarray): per-coordinate variance of the estimate,
            i.e. the sample variance divided by n
        seed (int): the seed the samples were drawn with

    """

    estimate: np.ndarray
    numSamples: int
    variance: np.ndarray
    seed: int

    @staticmethod
    def fromSamples(samples: Any, seed: int) -> EstimatorReport:
        samples = np.asarray(samples, dtype=np.float64)
        n = samples.shape[0]
        if n == 0:
            raise ValueError('estimator: no samples')

        var = samples.var(axis=0, ddof=1) if n > 1 \
            else np.zeros(samples.shape[1:])
        return EstimatorReport(samples.mean(axis=0), n, var / n, seed)

    @property
    def sampleVariance(self) -> np.ndarray:
        return self.variance * self.numSamples

    @property
    def stdError(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def totalVariance(self) -> float:
        return float(np.sum(self.variance))

    def toCsvRow(self) -> str:
        """
        ``estimate...,n,variance,seed`` where variance is the total
        variance of the estimate

        """

        vals = [f'{v:.10g}' for v in np.ravel(self.estimate)]
        vals += [str(self.numSamples), f'{self.totalVariance:.10g}',
                 str(self.seed)]
        return ','.join(vals)

    @staticmethod
    def combine(reports: Sequence[EstimatorReport]) -> EstimatorReport:
        """
        Merge batch reports as if their samples had been pooled.
        Batches are reduced in the given order.

        """

        if not reports:
            raise ValueError('combine: no reports')

        total = sum(r.numSamples for r in reports)
        mean = sum(r.numSamples * r.estimate for r in reports) / total

        ss = 0.0
        for r in reports:
            ss = ss + (r.numSamples - 1) * r.sampleVariance \
                + r.numSamples * (r.estimate - mean) ** 2
        pooled = ss / (total - 1) if total > 1 else np.zeros_like(mean)

        return EstimatorReport(mean, total, pooled / total, reports[0].seed)


NOISE_FAMILIES = ('gaussian', 'gumbel_shifted', 'uniform', 'logistic')


@dataclass(frozen=True)
class NoiseModel:
    """
    Noise density p(z) ∝ exp(-ν(z)) with a sampler

    Families:
        gaussian -- ν(z) = ½||z||²
        gumbel_shifted -- standard Gumbel shifted by -γ to zero mean
        uniform -- uniform on [-½, ½], ∇ν = 0 inside the support
        logistic -- standard logistic

    """

    family: str = 'gaussian'

    def __post_init__(self) -> None:
        if self.family not in NOISE_FAMILIES:
            raise ValueError(
                f'noise: unknown family {self.family}, '
                f'choose from {", ".join(NOISE_FAMILIES)}')

    def sample(self, rng: np.random.Generator, shape: Any = ()) -> np.ndarray:
        if self.family == 'gaussian':
            return rng.standard_normal(shape)
        if self.family == 'gumbel_shifted':
            return _gumbel(rng, shape) - EULER_GAMMA
        if self.family == 'uniform':
            return rng.random(shape) - 0.5
        return rng.logistic(size=shape)

    def nu(self, z: Any) -> float:
        """
        Negative log-density up to an additive constant

        """

        z = np.asarray(z, dtype=np.float64)
        if self.family == 'gaussian':
            return 0.5 * float(np.sum(z * z))
        if self.family == 'gumbel_shifted':
            g = z + EULER_GAMMA
            return float(np.sum(g + np.exp(-g)))
        if self.family == 'uniform':
            return 0.0 if np.all(np.abs(z) <= 0.5) else float('inf')
        return float(np.sum(z + 2.0 * np.logaddexp(0.0, -z)))

    def gradNu(self, z: Any) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.family == 'gaussian':
            return z.copy()
        if self.family == 'gumbel_shifted':
            return 1.0 - np.exp(-(z + EULER_GAMMA))
        if self.family == 'uniform':
            return np.zeros_like(z)
        return np.tanh(z / 2.0)


def _gumbel(rng: np.random.Generator, shape: Any) -> np.ndarray:
    u = rng.uniform(np.finfo(np.float64).tiny, 1.0, size=shape)
    return -np.log(-np.log(u))


def _checkCount(op: str, n: int) -> None:
    if n <= 0:
        raise ValueError(f'{op}: number of samples must be positive, got {n}')


def _checkScale(op: str, sigma: float) -> None:
    if not sigma > 0:
        raise ValueError(f'{op}: sigma must be positive, got {sigma}')


Baseline = Union[None, float, str]


def sfeGradient(logpGrad: Callable, sampler: Callable, g: Callable,
                theta: Any, n: int, seed: int,
                baseline: Baseline = None,
                cv: Optional[tuple] = None) -> EstimatorReport:
    """
    Score-function estimate of ∇_θ E_{Y~p_θ}[g(Y)]

    Args:
        logpGrad (Callable): (θ, y) -> ∇_θ log p_θ(y)
        sampler (Callable): (θ, rng) -> one draw y ~ p_θ
        g (Callable): y -> real
        theta (Any): distribution parameters
        n (int): number of samples
        seed (int): RNG seed
        baseline (Baseline): None, a constant β, or ``'running'`` for
            the mean of g over the previous samples
        cv (Optional[tuple]): control variate (h, hGrad, weight) where
            hGrad = ∇_θ E[h(Y)] is known in closed form

    Returns:
        EstimatorReport: the estimate with its variance

    Raises:
        ValueError: if n <= 0

    """

    _checkCount('sfe_gradient', n)
    theta = np.asarray(theta, dtype=np.float64)
    rng = makeRng(seed)

    if cv is not None:
        h, hGrad, weight = cv
        hMean = np.asarray(hGrad(theta), dtype=np.float64)

    samples = []
    running = 0.0
    for i in range(n):
        y = sampler(theta, rng)
        gy = float(g(y))
        score = np.asarray(logpGrad(theta, y), dtype=np.float64)

        if baseline == 'running':
            beta = running / i if i > 0 else 0.0
            running += gy
        elif baseline is None:
            beta = 0.0
        else:
            beta = float(baseline)

        s = (gy - beta) * score
        if cv is not None:
            s = s - weight * (float(h(y)) * score - hMean)
        samples.append(s)

    return EstimatorReport.fromSamples(samples, seed)


@dataclass(frozen=True)
class Transform:
    """
    A sampling transform y = T(z, θ)

    Attributes:
        fn: (z, θ) -> y
        thetaVjp: (z, θ, u) -> ∂_θ T(z, θ)* [u], or None if unknown

    """

    fn: Callable
    thetaVjp: Optional[Callable] = None


def locationScale() -> Transform:
    """
    T(z, θ) = μ + σ ⊙ z with θ = concat(μ, σ)

    """

    def split(theta):
        d = theta.shape[0] // 2
        return theta[:d], theta[d:]

    def fn(z, theta):
        mu, sigma = split(theta)
        return mu + sigma * z

    def thetaVjp(z, theta, u):
        return np.concatenate([np.ravel(u), np.ravel(u * z)])

    return Transform(fn, thetaVjp)


def reparamGradient(transform: Transform, gradG: Callable, noise: NoiseModel,
                    theta: Any, n: int, seed: int,
                    noiseShape: Any = ()) -> EstimatorReport:
    """
    Pathwise estimate E[∂_θ T(Z, θ)* ∇g(T(Z, θ))]

    Raises:
        ValueError: if the transform has no Jacobian or n <= 0

    """

    if transform.thetaVjp is None:
        raise ValueError('reparam_gradient: transform has no Jacobian')
    _checkCount('reparam_gradient', n)

    theta = np.asarray(theta, dtype=np.float64)
    rng = makeRng(seed)

    samples = []
    for _ in range(n):
        z = noise.sample(rng, noiseShape)
        y = transform.fn(z, theta)
        samples.append(transform.thetaVjp(z, theta, gradG(y)))

    return EstimatorReport.fromSamples(samples, seed)


def inverseTransformSample(quantile: Callable, theta: Any, n: int,
                           seed: int) -> np.ndarray:
    """
    Draw Q(U, θ) with U uniform on (0, 1)

    """

    _checkCount('inverse_transform_sample', n)
    u = makeRng(seed).uniform(np.finfo(np.float64).tiny, 1.0, size=n)
    return np.asarray(quantile(u, theta), dtype=np.float64)


def exponentialQuantile(p: Any, lam: float) -> np.ndarray:
    return -np.log1p(-np.asarray(p)) / lam


def gaussianQuantile(p: Any, theta: Any) -> np.ndarray:
    mu, sigma = theta
    return mu + sigma * ndtri(p)


def uniformQuantile(p: Any, theta: Any = None) -> np.ndarray:
    return np.asarray(p, dtype=np.float64)


def gumbelSample(n: int, seed: int, shifted: bool = True,
                 shape: Any = ()) -> np.ndarray:
    """
    n draws of -log(-log U), minus Euler's γ when ``shifted``

    """

    _checkCount('gumbel_sample', n)
    g = _gumbel(makeRng(seed), (n, *tuple(shape)))
    return g - EULER_GAMMA if shifted else g


def perturbedArgmaxExpectation(mu: Any, sigma: float, n: int,
                               seed: int) -> EstimatorReport:
    """
    E[onehot(argmax(μ + σZ))], Z shifted Gumbel.
    Converges to softargmax(μ/σ).

    """

    _checkScale('perturbed_argmax', sigma)
    mu = np.asarray(mu, dtype=np.float64)
    z = gumbelSample(n, seed, shape=mu.shape)
    idx = np.argmax(mu + sigma * z, axis=1)
    return EstimatorReport.fromSamples(np.eye(mu.shape[0])[idx], seed)


def perturbedMaxExpectation(mu: Any, sigma: float, n: int,
                            seed: int) -> EstimatorReport:
    """
    E[max(μ + σZ)], Z shifted Gumbel. Converges to σ·LSE(μ/σ).

    """

    _checkScale('perturbed_max', sigma)
    mu = np.asarray(mu, dtype=np.float64)
    z = gumbelSample(n, seed, shape=mu.shape)
    return EstimatorReport.fromSamples(np.max(mu + sigma * z, axis=1), seed)


def perturbedGt(mu1: float, mu2: float, sigma: float, n: int,
                seed: int) -> EstimatorReport:
    """
    P(μ1 + σZ1 > μ2 + σZ2) with Gumbel noise.
    Converges to logistic((μ1 - μ2)/σ).

    """

    _checkScale('perturbed_gt', sigma)
    z = gumbelSample(n, seed, shape=(2,))
    wins = (mu1 + sigma * z[:, 0]) > (mu2 + sigma * z[:, 1])
    return EstimatorReport.fromSamples(wins.astype(np.float64), seed)


def gumbelSoftargmax(mu: Any, temperature: float, seed: int) -> np.ndarray:
    """
    softargmax((μ + G)/τ) for one Gumbel draw G

    """

    _checkScale('gumbel_softargmax', temperature)
    mu = np.asarray(mu, dtype=np.float64)
    g = _gumbel(makeRng(seed), mu.shape)
    return softmax((mu + g) / temperature)


ES_SCHEMES = ('vanilla', 'forward_diff', 'central_diff')


def esGradient(f: Callable, mu: Any, sigma: float, n: int, seed: int,
               scheme: str = 'vanilla') -> EstimatorReport:
    """
    Gradient of the Gaussian smoothing f_σ(μ) = E[f(μ + σZ)] using
    evaluations of f only

    Args:
        f (Callable): black-box objective
        mu (Any): the point
        sigma (float): smoothing scale, > 0
        n (int): number of samples
        seed (int): RNG seed
        scheme (str): ``vanilla`` f(μ+σZ)Z/σ,
            ``forward_diff`` (f(μ+σZ) - f(μ))Z/σ or
            ``central_diff`` (f(μ+σZ) - f(μ-σZ))Z/(2σ)

    """

    if scheme not in ES_SCHEMES:
        raise ValueError(
            f'es_gradient: unknown scheme {scheme}, '
            f'choose from {", ".join(ES_SCHEMES)}')
    _checkScale('es_gradient', sigma)
    _checkCount('es_gradient', n)

    mu = np.asarray(mu, dtype=np.float64)
    z = makeRng(seed).standard_normal((n, *mu.shape))
    f0 = float(f(mu)) if scheme == 'forward_diff' else 0.0

    samples = np.empty_like(z)
    for i in range(n):
        fp = float(f(mu + sigma * z[i]))
        if scheme == 'central_diff':
            coef = (fp - float(f(mu - sigma * z[i]))) / (2.0 * sigma)
        else:
            coef = (fp - f0) / sigma
        samples[i] = coef * z[i]

    return EstimatorReport.fromSamples(samples, seed)


def steinGradient(gradF: Callable, mu: Any, sigma: float, n: int,
                  seed: int) -> EstimatorReport:
    """
    First-order estimator E[<∇f(μ + σZ), Z> Z]; as σ -> 0 its mean
    tends to ∇f(μ)

    """

    _checkCount('stein_gradient', n)
    if sigma < 0:
        raise ValueError(f'stein_gradient: sigma must be >= 0, got {sigma}')

    mu = np.asarray(mu, dtype=np.float64)
    z = makeRng(seed).standard_normal((n, *mu.shape))
    samples = np.empty_like(z)
    for i in range(n):
        gi = np.asarray(gradF(mu + sigma * z[i]), dtype=np.float64)
        samples[i] = np.vdot(gi, z[i]) * z[i]

    return EstimatorReport.fromSamples(samples, seed)


def categoricalSampler(theta: np.ndarray, rng: np.random.Generator) -> int:
    """
    Draw an index from softargmax(θ)

    """

    return int(rng.choice(theta.shape[0], p=softmax(theta)))


def categoricalLogpGrad(theta: np.ndarray, y: int) -> np.ndarray:
    """
    ∇_θ log softargmax(θ)_y = e_y - softargmax(θ)

    """

    g = -softmax(theta)
    g[y] += 1.0
    return g

