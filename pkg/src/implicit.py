"""
Differentiation of implicitly defined functions.

Inner solvers are black boxes: only their solutions are used, together
with the partial derivatives of the defining equations at the solution,
applied matrix-free through ``LinearMap``.

"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Callable, Optional, Union
import logging

import numpy as np

from .autodiff import FeedforwardSpec, jacobianMap, jvp, vjp
from .errors import ConvergenceError, IndefiniteError
from .graph import Graph, LinearMap, Tensor, asTensor
from .secondorder import cgSolve

logger = logging.getLogger(__name__)


def solveLinearGeneral(a: Union[LinearMap, Any], b: Any, tol: float = 1e-10,
                       symmetric: bool = False,
                       maxIter: Optional[int] = None) -> Tensor:
    """
    Matrix-free solve of A x = b

    Symmetric positive definite systems use conjugate gradient directly;
    any other system runs conjugate gradient on A* A x = A* b.

    Args:
        a (Union[LinearMap, Any]): the operator, or a dense matrix
        b (Any): right-hand side
        tol (float): required relative residual ||A x - b|| <= tol ||b||
        symmetric (bool): A is symmetric positive definite
        maxIter (Optional[int]): CG iteration cap

    Returns:
        Tensor: the solution

    Raises:
        ConvergenceError: the residual stayed above the tolerance

    """

    if not isinstance(a, LinearMap):
        a = LinearMap.fromMatrix(a)
    b = asTensor(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(a.inShape)

    try:
        if symmetric:
            x = cgSolve(a.apply, b, tol, maxIter).x
        else:
            def normal(v):
                return a.adjointApply(a.apply(v))

            x = cgSolve(normal, a.adjointApply(b), tol * 1e-3, maxIter).x
    except IndefiniteError as e:
        raise ConvergenceError(
            f'solve: operator is singular or indefinite ({e})', bnorm)

    res = float(np.linalg.norm(a.apply(x) - b))
    logger.debug('solve: relative residual %.3e', res / bnorm)
    if res > tol * bnorm:
        raise ConvergenceError(
            f'solve: residual {res:.3e} above {tol:g} * ||b||', res)
    return x


@dataclass(frozen=True)
class RootProblem:
    """
    w*(λ) defined by F(w*(λ), λ) = 0

    Attributes:
        residual: (w, λ) -> F(w, λ)
        solver: λ -> w*(λ)
        jacW: (w, λ) -> LinearMap ∂₁F(w, λ)
        jacLam: (w, λ) -> LinearMap ∂₂F(w, λ)
        symmetric (bool): ∂₁F is symmetric positive definite

    """

    residual: Callable
    solver: Callable
    jacW: Callable
    jacLam: Callable
    symmetric: bool = False

    @staticmethod
    def fromGraph(graph: Graph, solver: Callable,
                  symmetric: bool = False) -> RootProblem:
        """
        A problem whose residual is a graph with inputs (w, λ)

        """

        if graph.numInputs != 2:
            raise ValueError('root_problem: the graph must take (w, λ)')
        return RootProblem(
            lambda w, lam: graph.eval([w, lam]), solver,
            lambda w, lam: jacobianMap(graph, [w, lam], 0),
            lambda w, lam: jacobianMap(graph, [w, lam], 1),
            symmetric)


def iftJvp(problem: RootProblem, lam: Any, v: Any,
           tol: float = 1e-10) -> Tensor:
    """
    ∂w*(λ)[v], the t solving ∂₁F t = -∂₂F v at w = w*(λ)

    Raises:
        ConvergenceError: the linear system could not be solved

    """

    w = asTensor(problem.solver(lam))
    a = problem.jacW(w, lam)
    rhs = -problem.jacLam(w, lam).apply(v)
    return solveLinearGeneral(a, rhs, tol, problem.symmetric)


def iftVjp(problem: RootProblem, lam: Any, u: Any,
           tol: float = 1e-10) -> Tensor:
    """
    ∂w*(λ)*[u] = -∂₂F* r with ∂₁F* r = u

    """

    w = asTensor(problem.solver(lam))
    a = problem.jacW(w, lam)
    r = solveLinearGeneral(a.adjoint, u, tol, problem.symmetric)
    return -problem.jacLam(w, lam).adjointApply(r)


@dataclass(frozen=True)
class AdjointStateProblem:
    """
    L(w) = L(s*(w), w) with s*(w) defined by c(s*(w), w) = 0

    Attributes:
        stateSolver: w -> s*(w)
        grad1L: (s, w) -> ∇₁L
        grad2L: (s, w) -> ∇₂L
        jac1c: (s, w) -> LinearMap ∂₁c
        jac2c: (s, w) -> LinearMap ∂₂c
        adjointSolve: optional (s, w, rhs) -> r solving ∂₁c* r = rhs;
            a matrix-free general solve is used when absent

    """

    stateSolver: Callable
    grad1L: Callable
    grad2L: Callable
    jac1c: Callable
    jac2c: Callable
    adjointSolve: Optional[Callable] = None


def adjointStateGradient(problem: AdjointStateProblem, w: Any,
                         tol: float = 1e-10) -> Tensor:
    """
    ∇L(w) = ∇₂L + ∂₂c* r with ∂₁c* r = -∇₁L

    Raises:
        ConvergenceError: the adjoint system could not be solved

    """

    w = asTensor(w)
    s = asTensor(problem.stateSolver(w))
    rhs = -asTensor(problem.grad1L(s, w))

    if problem.adjointSolve is not None:
        r = problem.adjointSolve(s, w, rhs)
    else:
        r = solveLinearGeneral(problem.jac1c(s, w).adjoint, rhs, tol)

    return asTensor(problem.grad2L(s, w)) \
        + problem.jac2c(s, w).adjointApply(r)


def _blocks(states: list) -> tuple:
    shapes = [np.shape(s) for s in states[1:]]
    sizes = [int(np.prod(sh)) for sh in shapes]
    return shapes, np.cumsum([0] + sizes)


def _split(v: Tensor, shapes: list, offsets: Any) -> list:
    return [v[offsets[k]:offsets[k + 1]].reshape(shapes[k])
            for k in range(len(shapes))]


def _flat(parts: list) -> Tensor:
    return np.concatenate([np.ravel(p) for p in parts])


def feedforwardConstraints(spec: FeedforwardSpec,
                           lossGrad: Callable) -> AdjointStateProblem:
    """
    A feedforward network written as the constraints
    c_k = s_k - f_k(s_{k-1}, w_k) = 0, k = 1..K, on the stacked state
    (s_1, ..., s_K) and stacked parameters (w_1, ..., w_K). ∂₁c is
    block lower triangular with identity blocks, so the adjoint system
    is solved by backsubstitution.

    Args:
        spec (FeedforwardSpec): the network; its params give the
            parameter shapes
        lossGrad (Callable): s_K -> ∇L(s_K)

    Returns:
        AdjointStateProblem: over flat state and parameter vectors

    """

    layers = spec.layers
    x = asTensor(spec.x)
    wShapes = [np.shape(p) for p in spec.params]
    wOffsets = np.cumsum([0] + [int(np.prod(sh)) for sh in wShapes])
    sShapes, sOffsets = _blocks(spec.forward())
    K = len(layers)

    def params(w):
        return _split(asTensor(w), wShapes, wOffsets)

    def states(s):
        return [x] + _split(asTensor(s), sShapes, sOffsets)

    def stateSolver(w):
        ss = [x]
        for layer, wk in zip(layers, params(w)):
            ss.append(layer.eval([ss[-1], wk]))
        return _flat(ss[1:])

    def grad1L(s, w):
        g = np.zeros(s.size)
        g[sOffsets[K - 1]:] = np.ravel(lossGrad(states(s)[-1]))
        return g

    def grad2L(s, w):
        return np.zeros(asTensor(w).size)

    def jac1c(s, w):
        ss, ws = states(s), params(w)

        def apply(t):
            ts = _split(t, sShapes, sOffsets)
            out = [ts[0]]
            for k in range(1, K):
                d = jvp(layers[k], [ss[k], ws[k]], [ts[k - 1], None])
                out.append(ts[k] - d)
            return _flat(out)

        def adjoint(r):
            rs = _split(r, sShapes, sOffsets)
            out = []
            for k in range(K - 1):
                d = vjp(layers[k + 1], [ss[k + 1], ws[k + 1]], rs[k + 1])[0]
                out.append(rs[k] - d)
            out.append(rs[K - 1])
            return _flat(out)

        return LinearMap((s.size,), (s.size,), apply, adjoint)

    def jac2c(s, w):
        ss, ws = states(s), params(w)

        def apply(v):
            vs = _split(v, wShapes, wOffsets)
            return _flat([-jvp(layers[k], [ss[k], ws[k]], [None, vs[k]])
                          for k in range(K)])

        def adjoint(r):
            rs = _split(r, sShapes, sOffsets)
            return _flat([-vjp(layers[k], [ss[k], ws[k]], rs[k])[1]
                          for k in range(K)])

        return LinearMap((w.size,), (s.size,), apply, adjoint)

    def adjointSolve(s, w, rhs):
        ss, ws = states(s), params(w)
        bs = _split(rhs, sShapes, sOffsets)
        rs: list = [None] * K
        rs[K - 1] = bs[K - 1]
        for k in range(K - 2, -1, -1):
            rs[k] = bs[k] + vjp(layers[k + 1], [ss[k + 1], ws[k + 1]],
                                rs[k + 1])[0]
        return _flat(rs)

    return AdjointStateProblem(stateSolver, grad1L, grad2L, jac1c, jac2c,
                               adjointSolve)


def danskinGradient(maxOracle: Callable, grad2: Callable, lam: Any) -> Tensor:
    """
    Gradient of h(λ) = max_w f(w, λ): ∇₂f(w*(λ), λ)

    Args:
        maxOracle (Callable): λ -> w*(λ), the unique maximizer
        grad2 (Callable): (w, λ) -> ∇₂f(w, λ)
        lam (Any): the point

    """

    return asTensor(grad2(maxOracle(lam), lam))


def inverseFnJvp(f: Graph, inverse: Callable, omega: Any, v: Any,
                 tol: float = 1e-10) -> Tensor:
    """
    ∂f⁻¹(ω)[v] = ∂f(w)⁻¹ v at w = f⁻¹(ω)

    Args:
        f (Graph): single-input program
        inverse (Callable): ω -> f⁻¹(ω), a local inverse
        omega (Any): the point
        v (Any): the direction

    Raises:
        ConvergenceError: ∂f(w) is singular

    """

    w = asTensor(inverse(omega))
    return solveLinearGeneral(jacobianMap(f, [w]), v, tol)
