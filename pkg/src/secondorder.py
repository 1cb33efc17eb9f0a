"""
Second-order products: Hessian-vector products by four compositions of
the autodiff passes, Gauss-Newton and Fisher products, conjugate
gradient and inverse-Hessian products, and the backpropagated Hessian
diagonal of layered networks.

"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Optional, Sequence, Union
import logging

import numpy as np
from scipy.special import softmax

from .autodiff import gradGraph, gradient, jacobianMap, jvp, jvpGraph
from .errors import ConvergenceError, IndefiniteError, ShapeError
from .estimators import EstimatorReport, makeRng
from .graph import Graph, GraphBuilder, LinearMap, Tensor, asTensor
from .graph import ELEMENTWISE, inlineGraph

logger = logging.getLogger(__name__)

HVP_METHODS = ('rev_on_rev', 'fwd_on_rev', 'rev_on_fwd', 'fwd_on_fwd')
FWD_ON_FWD_MAX_DIM = 64


def _checkMethod(method: str) -> None:
    if method not in HVP_METHODS:
        raise ValueError(
            f'hvp: unknown method {method}, '
            f'choose from {", ".join(HVP_METHODS)}')


def _innerWithGradGraph(graph: Graph) -> Graph:
    """
    (w, v) -> <∇L(w), v>

    """

    shape = graph.inputShapes[0]
    b = GraphBuilder()
    w = b.input(shape)
    v = b.input(shape)
    g = inlineGraph(b, gradGraph(graph), [w])
    return b.build(b.reduce('sum', b.mul(g, v)))


def hvpOperator(graph: Graph, w: Any,
                method: str = 'fwd_on_rev') -> LinearMap:
    """
    v -> ∇²L(w) v for a scalar program L with one input.
    The derivative programs are built once per operator.

    Raises:
        ValueError: unknown method, or fwd_on_fwd above dimension 64

    """

    _checkMethod(method)
    if graph.numInputs != 1:
        raise ValueError('hvp: the program must have exactly one input')
    if graph.outputShape != ():
        raise ValueError('hvp: the program must have a scalar output')

    w = asTensor(w)
    shape = w.shape
    dim = int(np.prod(shape))

    if method == 'fwd_on_rev':
        gGraph = gradGraph(graph)

        def applyFn(v):
            return jvp(gGraph, [w], [v])

    elif method == 'rev_on_rev':
        inner = _innerWithGradGraph(graph)

        def applyFn(v):
            return gradient(inner, [w, v], 0)

    elif method == 'rev_on_fwd':
        tGraph = jvpGraph(graph)

        def applyFn(v):
            return gradient(tGraph, [w, v], 0)

    else:
        if dim > FWD_ON_FWD_MAX_DIM:
            raise ValueError(
                f'hvp: fwd_on_fwd is limited to dimension '
                f'{FWD_ON_FWD_MAX_DIM}, got {dim}')
        ttGraph = jvpGraph(jvpGraph(graph))
        zero = np.zeros(shape)

        def applyFn(v):
            col = np.zeros(dim)
            for i in range(dim):
                e = np.zeros(dim)
                e[i] = 1.0
                col[i] = float(ttGraph.eval([w, v, e.reshape(shape), zero]))
            return col.reshape(shape)

    return LinearMap(shape, shape, applyFn, applyFn)


def hvp(graph: Graph, w: Any, v: Any, method: str = 'fwd_on_rev') -> Tensor:
    """
    Hessian-vector product ∇²L(w)[v]

    Args:
        graph (Graph): scalar program with one input
        w (Any): the point
        v (Any): the direction
        method (str): rev_on_rev, fwd_on_rev, rev_on_fwd or fwd_on_fwd

    Returns:
        Tensor: ∇²L(w) v

    """

    return hvpOperator(graph, w, method).apply(v)


def hessianMatrix(graph: Graph, w: Any,
                  method: str = 'fwd_on_rev') -> np.ndarray:
    return hvpOperator(graph, w, method).toMatrix()


class GaussNewtonOracle:
    """
    Gauss-Newton operator ∂f(w)* ∇²ℓ(f(w)) ∂f(w) of ℓ∘f

    Args:
        f (Graph): inner map w -> z
        loss (Graph): outer scalar ℓ(z)
        w (Any): the evaluation point

    Raises:
        ShapeError: the output of f does not fit the input of ℓ

    """

    def __init__(self, f: Graph, loss: Graph, w: Any) -> None:
        if f.outputShape != tuple(loss.inputShapes[0]):
            raise ShapeError(
                f'gnvp: f outputs shape {f.outputShape}, loss expects '
                f'{tuple(loss.inputShapes[0])}')

        self.w = asTensor(w)
        self.jac = jacobianMap(f, [self.w])
        self.z = f.eval([self.w])
        self.lossHvp = hvpOperator(loss, self.z)

    def gnvp(self, v: Any) -> Tensor:
        return self.jac.adjointApply(self.lossHvp.apply(self.jac.apply(v)))

    def operator(self) -> LinearMap:
        return LinearMap(self.w.shape, self.w.shape, self.gnvp, self.gnvp)


def gnvp(oracle: GaussNewtonOracle, v: Any) -> Tensor:
    return oracle.gnvp(v)


class CategoricalModel:
    """
    Categorical likelihood p(y | w) = softargmax(f(w))_y with the
    negative log-likelihood L(w) = LSE(f(w)) - f(w)_y

    Args:
        network (Graph): w -> logits of shape (M,)
        label (int): the observed class

    """

    def __init__(self, network: Graph, label: int = 0) -> None:
        (self.M,) = network.outputShape
        if not 0 <= label < self.M:
            raise ValueError(
                f'categorical: label {label} not in 0..{self.M - 1}')
        self.network = network
        self.label = label

    def lossGraph(self, label: Optional[int] = None) -> Graph:
        y = self.label if label is None else label
        b = GraphBuilder()
        z = b.input((self.M,))
        picked = b.reduce('sum', b.mul(z, b.constant(np.eye(self.M)[y])))
        return b.build(b.sub(b.reduce('logsumexp', z), picked))

    def nllGraph(self) -> Graph:
        """
        w -> L(w)

        """

        b = GraphBuilder()
        w = b.input(self.network.inputShapes[0])
        z = inlineGraph(b, self.network, [w])
        return b.build(inlineGraph(b, self.lossGraph(), [z]))

    def probs(self, w: Any) -> np.ndarray:
        return softmax(self.network.eval([w]))

    def jacobianT(self, w: Any) -> np.ndarray:
        """
        ∂f(w)* as a P x M matrix, one VJP per class

        """

        jac = jacobianMap(self.network, [w])
        cols = [jac.adjointApply(e).ravel() for e in np.eye(self.M)]
        return np.stack(cols, axis=1)

    def score(self, w: Any, y: int, jt: Optional[np.ndarray] = None,
              p: Optional[np.ndarray] = None) -> np.ndarray:
        """
        ∇_w log p(y | w) = ∂f(w)*[e_y - p]

        """

        jt = self.jacobianT(w) if jt is None else jt
        p = self.probs(w) if p is None else p
        d = -p.copy()
        d[y] += 1.0
        return jt @ d

    def gnOracle(self, w: Any) -> GaussNewtonOracle:
        return GaussNewtonOracle(self.network, self.lossGraph(), w)


def _drawLabels(model: CategoricalModel, p: np.ndarray, n: int, seed: int,
                sampler: Optional[Callable]) -> list:
    rng = makeRng(seed)
    if sampler is None:
        return list(rng.choice(model.M, size=n, p=p))

    labels = [int(sampler(p, rng)) for _ in range(n)]
    for y in labels:
        if not 0 <= y < model.M:
            raise ValueError(
                f'fisher: sampler returned label {y} outside 0..{model.M - 1}')
    return labels


def sampledScores(model: CategoricalModel, w: Any, numSamples: int,
                  seed: int, sampler: Optional[Callable] = None) -> np.ndarray:
    """
    Scores g_y = ∇_w log p(y | w) of sampled labels y ~ p(. | w),
    one flattened score per row

    """

    w = asTensor(w)
    jt = model.jacobianT(w)
    p = model.probs(w)
    labels = _drawLabels(model, p, numSamples, seed, sampler)
    return np.stack([model.score(w, y, jt, p) for y in labels])


def fisherVpSampled(model: CategoricalModel, w: Any, v: Any,
                    numSamples: int, seed: int,
                    sampler: Optional[Callable] = None) -> EstimatorReport:
    """
    Monte-Carlo Fisher-vector product E_y[g_y <g_y, v>] with scores
    g_y = ∇_w log p(y | w), y ~ p(. | w)

    Args:
        model (CategoricalModel): the likelihood
        w (Any): parameters
        v (Any): direction
        numSamples (int): number of labels drawn
        seed (int): RNG seed
        sampler (Optional[Callable]): (p, rng) -> label; defaults to
            drawing from p

    Raises:
        ValueError: a sampled label is outside the support

    """

    w = asTensor(w)
    scores = sampledScores(model, w, numSamples, seed, sampler)
    samples = scores * (scores @ asTensor(v).ravel())[:, None]
    return EstimatorReport.fromSamples(
        samples.reshape(numSamples, *w.shape), seed)


def fisherVpExact(model: CategoricalModel, w: Any, v: Any) -> Tensor:
    """
    Fisher-vector product summed over every label

    """

    w = asTensor(w)
    v = asTensor(v).ravel()
    jt = model.jacobianT(w)
    p = model.probs(w)

    out = np.zeros(v.shape)
    for y in range(model.M):
        g = model.score(w, y, jt, p)
        out += p[y] * g * np.dot(g, v)
    return out.reshape(w.shape)


def gnDiagBartlett(model: CategoricalModel, w: Any, numSamples: int,
                   seed: int) -> EstimatorReport:
    """
    Unbiased Gauss-Newton diagonal E_y[g_y ⊙ g_y], y ~ p(. | w)

    """

    w = asTensor(w)
    jt = model.jacobianT(w)
    p = model.probs(w)

    samples = []
    for y in _drawLabels(model, p, numSamples, seed, None):
        g = model.score(w, y, jt, p)
        samples.append((g * g).reshape(w.shape))

    return EstimatorReport.fromSamples(samples, seed)


def gnDiagExact(model: CategoricalModel, w: Any) -> Tensor:
    """
    diag(∂f* (diag(p) - pp^T) ∂f)

    """

    w = asTensor(w)
    jt = model.jacobianT(w)
    p = model.probs(w)
    hz = np.diag(p) - np.outer(p, p)
    return np.einsum('im,mn,in->i', jt, hz, jt).reshape(w.shape)


class CgResult(NamedTuple):
    x: Tensor
    converged: bool
    iterations: int
    residual: float


@dataclass
class CgState:
    """
    Conjugate gradient state

    Attributes:
        x (Tensor): iterate v_t
        r (Tensor): residual b - H v_t
        p (Tensor): search direction
        rr (float): <r_t, r_t>
        alpha (float): last step length
        beta (float): last direction update
        t (int): iterations done

    """

    x: Tensor
    r: Tensor
    p: Tensor
    rr: float
    alpha: float = 0.0
    beta: float = 0.0
    t: int = 0


Operator = Union[LinearMap, Callable[[Tensor], Tensor]]


def _asCallable(h: Operator) -> Callable:
    return h.apply if isinstance(h, LinearMap) else h


def cgSolve(h: Operator, b: Any, tol: float = 1e-10,
            maxIter: Optional[int] = None,
            x0: Optional[Any] = None) -> CgResult:
    """
    Matrix-free conjugate gradient for H x = b, H symmetric
    positive definite

    Args:
        h (Operator): LinearMap or callable v -> H v
        b (Any): right-hand side
        tol (float): stop when ||H x - b|| <= tol ||b||
        maxIter (Optional[int]): iteration cap, 10 * dim by default
        x0 (Optional[Any]): starting point, zero by default

    Returns:
        CgResult: the best iterate and whether it met the tolerance

    Raises:
        IndefiniteError: <p, H p> <= 0 was met

    """

    apply = _asCallable(h)
    b = asTensor(b)
    maxIter = 10 * max(b.size, 1) if maxIter is None else maxIter

    x = np.zeros_like(b) if x0 is None else asTensor(x0).copy()
    r = b - apply(x) if x0 is not None else b.copy()
    state = CgState(x, r, r.copy(), float(np.vdot(r, r)))

    target = tol * float(np.linalg.norm(b))
    best, bestRes = state.x.copy(), np.sqrt(state.rr)

    while np.sqrt(state.rr) > target and state.t < maxIter:
        hp = apply(state.p)
        curv = float(np.vdot(state.p, hp))
        if curv <= 0.0:
            raise IndefiniteError(
                f'cg: non-positive curvature {curv:.3e} at iteration '
                f'{state.t}', curv)

        state.alpha = state.rr / curv
        state.x = state.x + state.alpha * state.p
        state.r = state.r - state.alpha * hp
        rrNew = float(np.vdot(state.r, state.r))
        state.beta = rrNew / state.rr
        state.p = state.r + state.beta * state.p
        state.rr = rrNew
        state.t += 1

        if np.sqrt(rrNew) < bestRes:
            best, bestRes = state.x.copy(), np.sqrt(rrNew)

        logger.debug('cg: iteration %d residual %.3e', state.t, np.sqrt(rrNew))

    converged = bestRes <= target
    return CgResult(best, converged, state.t, float(bestRes))


def ihvp(graph: Graph, w: Any, u: Any, shift: float = 0.0,
         tol: float = 1e-10, method: str = 'fwd_on_rev',
         maxIter: Optional[int] = None) -> Tensor:
    """
    Solve (∇²L(w) + ηI) v = u with CG on Hessian-vector products

    Raises:
        ValueError: negative shift
        IndefiniteError: the shifted Hessian is not positive definite
        ConvergenceError: CG did not reach the tolerance

    """

    if shift < 0:
        raise ValueError(f'ihvp: shift must be >= 0, got {shift}')

    op = hvpOperator(graph, w, method)

    def shifted(v):
        return op.apply(v) + shift * v

    try:
        res = cgSolve(shifted, u, tol, maxIter)
    except IndefiniteError as e:
        raise IndefiniteError(
            f'ihvp: Hessian plus shift {shift:g} is not positive definite; '
            f'increase the shift ({e})', e.curvature)

    if not res.converged:
        raise ConvergenceError(
            f'ihvp: CG stopped after {res.iterations} iterations with '
            f'residual {res.residual:.3e}', res.residual)
    return res.x


@dataclass(frozen=True)
class Layer:
    """
    t = W s, s' = a(t)

    Attributes:
        W (np.ndarray): weights
        activation (str): an elementwise function name or ``identity``

    """

    W: Any
    activation: str = 'identity'


class DiagChainResult(NamedTuple):
    hessDiag: list
    grads: list
    inputDiag: Tensor
    inputGrad: Tensor


def _applyActivation(name: str, t: Tensor) -> Tensor:
    if name == 'identity':
        return t
    if name not in ELEMENTWISE:
        raise ValueError(f'hessian_diag_chain: unsupported activation {name}')
    return asTensor(ELEMENTWISE[name](t))


def _activationDerivs(name: str, t: Tensor) -> tuple:
    """
    a'(t) and a''(t) elementwise

    """

    if name == 'identity':
        return np.ones_like(t), np.zeros_like(t)

    b = GraphBuilder()
    x = b.input(t.shape)
    try:
        g = b.build(b.elementwise(name, x))
    except ValueError:
        raise ValueError(f'hessian_diag_chain: unsupported activation {name}')

    ones = np.ones_like(t)
    d1 = jvp(g, [t], [ones])
    d2 = jvp(jvpGraph(g), [t, ones], [ones, None])
    return d1, d2


def hessianDiagChain(layers: Sequence[Layer], x: Any,
                     loss: Graph) -> DiagChainResult:
    """
    Approximate Hessian diagonals of L = ℓ(s_K) w.r.t. every weight by
    one backward pass of gradients r_k and curvatures d_k:

        δ_k = r_k ⊙ a''(t_k) + d_k ⊙ a'(t_k)²
        diag H_{W_k} = δ_k s_{k-1}²ᵀ
        d_{k-1} = (W_k ⊙ W_k)ᵀ δ_k

    Cross terms are dropped, so the result is exact when every
    Jacobian downstream is diagonal.

    Args:
        layers (Sequence[Layer]): the network
        x (Any): its input s_0
        loss (Graph): ℓ, scalar program of s_K

    Returns:
        DiagChainResult: per-layer diagonals and gradients, and the
            diagonal and gradient w.r.t. the input

    """

    states = [asTensor(x)]
    pre = []
    for layer in layers:
        t = asTensor(layer.W) @ states[-1]
        pre.append(t)
        states.append(_applyActivation(layer.activation, t))

    sK = states[-1]
    r = gradient(loss, [sK])
    lossH = hvpOperator(loss, sK)
    d = np.array([lossH.apply(e)[i] for i, e in enumerate(np.eye(sK.size))])

    hessDiag: list = [None] * len(layers)
    grads: list = [None] * len(layers)
    for k in range(len(layers) - 1, -1, -1):
        W = asTensor(layers[k].W)
        a1, a2 = _activationDerivs(layers[k].activation, pre[k])
        delta = r * a2 + d * a1 ** 2
        g = r * a1
        hessDiag[k] = np.outer(delta, states[k] ** 2)
        grads[k] = np.outer(g, states[k])
        r = W.T @ g
        d = (W ** 2).T @ delta

    return DiagChainResult(hessDiag, grads, d, r)
