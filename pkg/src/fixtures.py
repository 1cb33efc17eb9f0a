"""
Bundled problems shared by the tests and the command line

"""

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .autodiff import FeedforwardSpec
from .estimators import (NoiseModel, categoricalLogpGrad, categoricalSampler,
                         esGradient, locationScale, makeRng,
                         perturbedArgmaxExpectation, perturbedGt,
                         perturbedMaxExpectation, reparamGradient,
                         sfeGradient, steinGradient)
from .graph import Graph, GraphBuilder
from .ode import OdeProblem
from .optim import Oracle, StepConfig
from .secondorder import CategoricalModel

SAFE_ELEMENTWISE = ('sin', 'cos', 'tanh', 'logistic', 'softplus', 'square')

FIGURE_GRAPH_TEXT = """\
# f(x1, x2) = x2 exp(x1) sqrt(x1 + x2 exp(x1))
graph inputs=2 output=6
0 input shape=[]
1 input shape=[]
2 elementwise name=exp 0
3 mul 1 2
4 add 0 3
5 elementwise name=sqrt 4
6 mul 3 5
"""


def figureGraph() -> Graph:
    """
    f(x1, x2) = x2 e^{x1} sqrt(x1 + x2 e^{x1}); f(0, 1) = 1

    """

    return Graph.deserialize(FIGURE_GRAPH_TEXT)


def randomGraph(seed: int, dim: int = 4, depth: int = 6,
                numInputs: int = 2) -> Graph:
    """
    A random scalar program over vectors of size ``dim``, built from
    bounded-domain primitives so every input gives finite values

    """

    rng = makeRng(seed)
    b = GraphBuilder()
    ids = [b.input((dim,)) for _ in range(numInputs)]

    for _ in range(depth):
        op = rng.integers(4)
        x = ids[rng.integers(len(ids))]
        if op == 0:
            name = SAFE_ELEMENTWISE[rng.integers(len(SAFE_ELEMENTWISE))]
            ids.append(b.elementwise(name, x))
        elif op == 1:
            ids.append(b.add(x, ids[rng.integers(len(ids))]))
        elif op == 2:
            ids.append(b.mul(b.elementwise('tanh', x),
                             ids[rng.integers(len(ids))]))
        else:
            w = b.constant(rng.standard_normal((dim, dim)) / np.sqrt(dim))
            ids.append(b.matvec(w, x))

    tail = ids[numInputs:] or ids
    total = tail[0]
    for k in tail[1:]:
        total = b.add(total, k)
    return b.build(b.reduce('logsumexp', b.elementwise('tanh', total)))


def denseLayer(inDim: int, outDim: int, activation: str = 'tanh') -> Graph:
    """
    s' = a(W s), inputs (s, W)

    """

    b = GraphBuilder()
    s = b.input((inDim,))
    w = b.input((outDim, inDim))
    t = b.matvec(w, s)
    if activation != 'identity':
        t = b.elementwise(activation, t)
    return b.build(t)


def mlpSpec(seed: int = 0, sizes: tuple = (3, 4, 4, 2),
            activation: str = 'tanh') -> FeedforwardSpec:
    rng = makeRng(seed)
    layers, params = [], []
    for m, n in zip(sizes[:-1], sizes[1:]):
        layers.append(denseLayer(m, n, activation))
        params.append(rng.standard_normal((n, m)) / np.sqrt(m))
    return FeedforwardSpec(layers, params, rng.standard_normal(sizes[0]))


def squaredNormLoss(dim: int) -> Graph:
    """
    ℓ(z) = ½||z||²

    """

    b = GraphBuilder()
    z = b.input((dim,))
    return b.build(b.scale(0.5, b.reduce('sum', b.elementwise('square', z))))


def categoricalModel(seed: int = 0, numClasses: int = 3, dim: int = 2,
                     label: int = 0) -> tuple:
    """
    Linear logits z = W x for a fixed input x

    Returns:
        CategoricalModel: the likelihood over W
        np.ndarray: a parameter point W

    """

    rng = makeRng(seed)
    x = rng.standard_normal(dim)
    b = GraphBuilder()
    w = b.input((numClasses, dim))
    network = b.build(b.matvec(w, b.constant(x)))
    return (CategoricalModel(network, label),
            rng.standard_normal((numClasses, dim)))


def quadraticGraph(a: Any, c: Any) -> Graph:
    """
    L(w) = ½ w^T A w - c^T w

    """

    a = np.asarray(a, dtype=np.float64)
    b = GraphBuilder()
    w = b.input((a.shape[0],))
    quad = b.reduce('sum', b.mul(w, b.matvec(b.constant(a), w)))
    lin = b.reduce('sum', b.mul(b.constant(c), w))
    return b.build(b.sub(b.scale(0.5, quad), lin))


def quadraticOracle(a: Any, c: Any) -> Oracle:
    a = np.asarray(a, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    return Oracle(lambda w: 0.5 * float(w @ a @ w) - float(c @ w),
                  lambda w: a @ w - c,
                  lambda w, v: a @ v)


def quarticOracle() -> Oracle:
    """
    L(w) = Σ w_i⁴ / 4 + ½||w||², minimized at 0

    """

    return Oracle(lambda w: float(np.sum(w ** 4) / 4 + 0.5 * w @ w),
                  lambda w: w ** 3 + w,
                  lambda w, v: (3.0 * w * w + 1.0) * v)


def lassoOracle() -> Oracle:
    """
    Smooth part ½(w - 1)² of the lasso ½(w - 1)² + λ|w|

    """

    return Oracle(lambda w: 0.5 * float(np.sum((w - 1.0) ** 2)),
                  lambda w: w - 1.0,
                  lambda w, v: v)


@dataclass(frozen=True)
class OptProblem:
    name: str
    oracle: Oracle
    w0: tuple
    config: StepConfig = field(default_factory=StepConfig)


def optProblem(name: str) -> OptProblem:
    """
    A bundled optimization problem by name

    Raises:
        ValueError: unknown name

    """

    if name == 'quadratic':
        return OptProblem(name, quadraticOracle(np.diag([1.0, 10.0]),
                                                [1.0, 1.0]),
                          (0.0, 0.0), StepConfig(stepsize=0.1))
    if name == 'quartic':
        return OptProblem(name, quarticOracle(), (2.0, -1.5),
                          StepConfig(stepsize=0.05, linesearch='armijo'))
    if name == 'lasso':
        return OptProblem(name, lassoOracle(), (3.0,),
                          StepConfig(stepsize=0.5, tag='l1', reg=0.3))
    raise ValueError(
        f'optimize: unknown problem {name}, '
        f'choose from {", ".join(OPT_PROBLEMS)}')


OPT_PROBLEMS = ('quadratic', 'quartic', 'lasso')


def linearOde(w: float = 0.5, x: float = 1.0, T: float = 1.0) -> OdeProblem:
    """
    s' = w s, so s(T) = x e^{wT} and d s(T) / dw = T x e^{wT}

    """

    b = GraphBuilder()
    b.input(())
    s = b.input(())
    wi = b.input(())
    return OdeProblem(b.build(b.mul(wi, s)), T, x, w)


def zeroOde(x: Any = (1.0, -2.0), T: float = 1.0) -> OdeProblem:
    x = np.asarray(x, dtype=np.float64)
    b = GraphBuilder()
    b.input(())
    b.input(x.shape)
    b.input(())
    return OdeProblem(b.build(b.zeros(x.shape)), T, x, 0.0)


def oscillatorOde(omega: float = 1.0, T: float = 1.0,
                  x: Optional[Any] = None) -> OdeProblem:
    """
    Harmonic oscillator (q, p)' = (p, -ω² q); ω is the parameter

    """

    b = GraphBuilder()
    b.input(())
    s = b.input((2,))
    w = b.input(())
    q = b.slice(s, 0, 1)
    p = b.slice(s, 1, 2)
    dp = b.neg(b.mul(b.elementwise('square', w), q))
    x = (1.0, 0.0) if x is None else x
    return OdeProblem(b.build(b.concat([p, dp])), T, x, omega)


ODE_FIXTURES = {
    'linear': linearOde,
    'oscillator': oscillatorOde,
    'zero': zeroOde,
}


def _cubic(w):
    return float(np.sum(np.asarray(w) ** 3))


def _cubicGrad(w):
    return 3.0 * np.asarray(w) ** 2


CUBIC_POINT = (0.5, -0.3)
CATEGORICAL_THETA = (1.0, 0.0, -1.0)

ESTIMATOR_FIXTURES = {
    'gumbel-argmax': lambda n, seed: perturbedArgmaxExpectation(
        (1.0, 0.0), 1.0, n, seed),
    'gumbel-max': lambda n, seed: perturbedMaxExpectation(
        (1.0, 0.0), 1.0, n, seed),
    'perturbed-gt': lambda n, seed: perturbedGt(1.0, 0.0, 1.0, n, seed),
    'sfe': lambda n, seed: sfeGradient(
        categoricalLogpGrad, categoricalSampler, float,
        CATEGORICAL_THETA, n, seed),
    'sfe-baseline': lambda n, seed: sfeGradient(
        categoricalLogpGrad, categoricalSampler, float,
        CATEGORICAL_THETA, n, seed, baseline='running'),
    'reparam': lambda n, seed: reparamGradient(
        locationScale(), lambda y: 2.0 * y, NoiseModel('gaussian'),
        (1.0, 0.5), n, seed, noiseShape=(1,)),
    'es-vanilla': lambda n, seed: esGradient(
        _cubic, CUBIC_POINT, 0.1, n, seed, 'vanilla'),
    'es-forward': lambda n, seed: esGradient(
        _cubic, CUBIC_POINT, 0.1, n, seed, 'forward_diff'),
    'es-central': lambda n, seed: esGradient(
        _cubic, CUBIC_POINT, 0.1, n, seed, 'central_diff'),
    'stein': lambda n, seed: steinGradient(
        _cubicGrad, CUBIC_POINT, 0.1, n, seed),
}
