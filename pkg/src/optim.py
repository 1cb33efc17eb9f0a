"""
First- and second-order optimizers.

Every step function maps an ``OptState`` to a new one and never mutates
its argument. ``minimize`` drives any of them.

"""

from __future__ import annotations
from dataclasses import dataclass, field, replace
from typing import Any, Callable, NamedTuple, Optional, Sequence
import logging

import numpy as np

from .autodiff import gradient
from .errors import ConvergenceError, IndefiniteError
from .graph import Graph, Tensor, asTensor
from .secondorder import (CategoricalModel, GaussNewtonOracle, cgSolve,
                          fisherVpExact, hvpOperator, sampledScores)
from .smoothops import PROX_TAGS, prox, simplexProject

logger = logging.getLogger(__name__)

PROJECTIONS = ('none', 'box', 'simplex', 'nonneg')
LINESEARCHES = ('none', 'armijo', 'exact')
SCHEDULES = ('constant', 'inv_sqrt')

CURVATURE_EPS = 1e-12
MIN_DAMPING = 1e-8
MAX_ESCALATIONS = 60


@dataclass(frozen=True)
class StepConfig:
    """
    Hyperparameters shared by the step functions

    Attributes:
        stepsize (float): γ > 0
        momentum (float): ν in [0, 1)
        beta1 (float): Adam first-moment decay in [0, 1)
        beta2 (float): Adam second-moment decay in [0, 1)
        eps (float): Adam denominator offset > 0
        damping (float): η >= 0 added to curvature matrices
        history (int): LBFGS memory m >= 1
        tag (str): projection (none, box, simplex, nonneg) or
            prox (l1, scaled_l2, group_l1, none) tag
        lower (float): box lower bound
        upper (float): box upper bound
        reg (float): regularization strength λ of the prox term
        groups (Optional[tuple]): index groups for group_l1
        linesearch (str): none, armijo or exact
        schedule (str): constant or inv_sqrt (γ / √(t + 1))

    """

    stepsize: float = 0.1
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    damping: float = 0.0
    history: int = 10
    tag: str = 'none'
    lower: float = 0.0
    upper: float = 1.0
    reg: float = 0.0
    groups: Optional[tuple] = None
    linesearch: str = 'none'
    schedule: str = 'constant'

    def __post_init__(self) -> None:
        if not self.stepsize > 0:
            raise ValueError(
                f'config: stepsize must be positive, got {self.stepsize}')
        for name in ('momentum', 'beta1', 'beta2'):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(
                    f'config: {name} must lie in [0, 1), got {value}')
        if not self.eps > 0:
            raise ValueError(f'config: eps must be positive, got {self.eps}')
        if self.damping < 0:
            raise ValueError(
                f'config: damping must be >= 0, got {self.damping}')
        if self.history < 1:
            raise ValueError(
                f'config: history must be >= 1, got {self.history}')
        if self.tag not in PROJECTIONS and self.tag not in PROX_TAGS:
            raise ValueError(f'config: unknown tag {self.tag}')
        if self.lower > self.upper:
            raise ValueError('config: box lower bound exceeds upper bound')
        if self.reg < 0:
            raise ValueError(f'config: reg must be >= 0, got {self.reg}')
        if self.linesearch not in LINESEARCHES:
            raise ValueError(
                f'config: unknown linesearch {self.linesearch}, '
                f'choose from {", ".join(LINESEARCHES)}')
        if self.schedule not in SCHEDULES:
            raise ValueError(
                f'config: unknown schedule {self.schedule}, '
                f'choose from {", ".join(SCHEDULES)}')


class CurvaturePair(NamedTuple):
    s: Tensor
    y: Tensor
    rho: float


@dataclass(frozen=True, eq=False)
class OptState:
    """
    Optimizer state

    Attributes:
        w (Tensor): iterate
        t (int): steps taken
        velocity (Optional[Tensor]): momentum buffer
        moment1 (Optional[Tensor]): Adam first moment
        moment2 (Optional[Tensor]): Adam second moment
        pairs (tuple): LBFGS pairs, oldest first
        grad (Optional[Tensor]): gradient at w, when known
        damping (float): damping used by the last second-order step

    """

    w: Tensor
    t: int = 0
    velocity: Optional[Tensor] = None
    moment1: Optional[Tensor] = None
    moment2: Optional[Tensor] = None
    pairs: tuple = field(default_factory=tuple)
    grad: Optional[Tensor] = None
    damping: float = 0.0

    @staticmethod
    def start(w0: Any) -> OptState:
        return OptState(np.array(w0, dtype=np.float64))


@dataclass(frozen=True)
class Oracle:
    """
    Objective oracle

    Attributes:
        value: w -> L(w)
        grad: w -> ∇L(w)
        hvp: optional (w, v) -> ∇²L(w) v

    """

    value: Callable
    grad: Callable
    hvp: Optional[Callable] = None

    @staticmethod
    def fromGraph(graph: Graph) -> Oracle:
        """
        Oracle of a scalar single-input program; Hessian-vector
        products go forward over reverse

        """

        operators: dict = {}

        def hvp(w, v):
            key = asTensor(w).tobytes()
            if key not in operators:
                operators.clear()
                operators[key] = hvpOperator(graph, w)
            return operators[key].apply(v)

        return Oracle(lambda w: float(graph.eval([w])),
                      lambda w: gradient(graph, [w]), hvp)


def stepsizeAt(config: StepConfig, t: int) -> float:
    if config.schedule == 'inv_sqrt':
        return config.stepsize / np.sqrt(t + 1.0)
    return config.stepsize


def _grad(state: OptState, oracle: Oracle) -> Tensor:
    return asTensor(oracle.grad(state.w) if state.grad is None
                    else state.grad)


def gdStep(state: OptState, oracle: Oracle, config: StepConfig) -> OptState:
    g = _grad(state, oracle)
    w = state.w - stepsizeAt(config, state.t) * g
    return replace(state, w=w, t=state.t + 1, grad=None)


def heavyballStep(state: OptState, oracle: Oracle,
                  config: StepConfig) -> OptState:
    """
    v ← νv - γ∇L(w), w ← w + v

    """

    g = _grad(state, oracle)
    v = np.zeros_like(state.w) if state.velocity is None else state.velocity
    v = config.momentum * v - stepsizeAt(config, state.t) * g
    return replace(state, w=state.w + v, velocity=v, t=state.t + 1,
                   grad=None)


def nesterovStep(state: OptState, oracle: Oracle,
                 config: StepConfig) -> OptState:
    """
    Heavy ball with the gradient taken at the look-ahead point w + νv

    """

    v = np.zeros_like(state.w) if state.velocity is None else state.velocity
    g = asTensor(oracle.grad(state.w + config.momentum * v))
    v = config.momentum * v - stepsizeAt(config, state.t) * g
    return replace(state, w=state.w + v, velocity=v, t=state.t + 1,
                   grad=None)


def adamStep(state: OptState, oracle: Oracle,
             config: StepConfig) -> OptState:
    """
    Adam with bias-corrected moments

    """

    g = _grad(state, oracle)
    t = state.t + 1
    m = np.zeros_like(g) if state.moment1 is None else state.moment1
    v = np.zeros_like(g) if state.moment2 is None else state.moment2
    m = config.beta1 * m + (1.0 - config.beta1) * g
    v = config.beta2 * v + (1.0 - config.beta2) * g * g
    mHat = m / (1.0 - config.beta1 ** t)
    vHat = v / (1.0 - config.beta2 ** t)
    w = state.w - stepsizeAt(config, state.t) * mHat \
        / (np.sqrt(vHat) + config.eps)
    return replace(state, w=w, t=t, moment1=m, moment2=v, grad=None)


def project(tag: str, w: Any, config: Optional[StepConfig] = None) -> Tensor:
    """
    Euclidean projection onto a feasible set

    Args:
        tag (str): none, box ([lower, upper] from the config),
            simplex or nonneg

    Raises:
        ValueError: unknown tag

    """

    w = asTensor(w)
    if tag == 'none':
        return w
    if tag == 'nonneg':
        return np.maximum(w, 0.0)
    if tag == 'box':
        config = config or StepConfig()
        return np.clip(w, config.lower, config.upper)
    if tag == 'simplex':
        return simplexProject(w.ravel()).reshape(w.shape)
    raise ValueError(
        f'project: unknown tag {tag}, choose from {", ".join(PROJECTIONS)}')


def projectedStep(state: OptState, oracle: Oracle,
                  config: StepConfig) -> OptState:
    g = _grad(state, oracle)
    w = project(config.tag, state.w - stepsizeAt(config, state.t) * g,
                config)
    return replace(state, w=w, t=state.t + 1, grad=None)


def proxStep(state: OptState, oracle: Oracle,
             config: StepConfig) -> OptState:
    """
    w ← prox_{γλΩ}(w - γ∇L(w)), Ω named by the config tag

    """

    g = _grad(state, oracle)
    gamma = stepsizeAt(config, state.t)
    w = state.w - gamma * g
    if config.tag != 'none':
        w = prox(config.tag, w, gamma * config.reg, config.groups)
    return replace(state, w=w, t=state.t + 1, grad=None)


def armijoLinesearch(f: Callable, w: Any, d: Any, g: Any,
                     gamma0: float = 1.0, c: float = 1e-4,
                     rho: float = 0.5, maxIter: int = 60) -> float:
    """
    Backtracking until f(w + γd) <= f(w) + cγ<g, d>

    Raises:
        ValueError: d is not a descent direction

    """

    w, d = asTensor(w), asTensor(d)
    slope = float(np.vdot(g, d))
    if slope >= 0:
        raise ValueError(
            f'linesearch: not a descent direction, <g, d> = {slope:.3e}')

    f0 = float(f(w))
    gamma = gamma0
    for _ in range(maxIter):
        if float(f(w + gamma * d)) <= f0 + c * gamma * slope:
            return gamma
        gamma *= rho
    logger.debug('linesearch: no sufficient decrease, step %.3e', gamma)
    return gamma


def dampedSolve(apply: Callable, g: Any, damping: float = 0.0,
                tol: float = 1e-10) -> tuple:
    """
    Solve (A + ηI) d = g by conjugate gradient, raising η to
    max(2η, 1e-8) while CG meets non-positive curvature or stalls

    Returns:
        Tensor: the direction d
        float: the damping η that worked

    Raises:
        ConvergenceError: no damping worked

    """

    g = asTensor(g)
    eta = damping
    for _ in range(MAX_ESCALATIONS):
        def shifted(v, eta=eta):
            return asTensor(apply(v)) + eta * v

        try:
            res = cgSolve(shifted, g, tol)
            if res.converged:
                return res.x, eta
        except IndefiniteError:
            pass
        eta = max(2.0 * eta, MIN_DAMPING)
        logger.debug('damped solve: raising damping to %.3e', eta)

    raise ConvergenceError(
        f'damped solve: no damping up to {eta:.3e} made the system '
        f'solvable', float(np.linalg.norm(g)))


def _scaledStep(state: OptState, f: Callable, d: Tensor, g: Tensor,
                config: StepConfig) -> float:
    gamma = stepsizeAt(config, state.t)
    if config.linesearch == 'armijo':
        return armijoLinesearch(f, state.w, -d, g, gamma)
    return gamma


def newtonStep(state: OptState, oracle: Oracle,
               config: StepConfig) -> OptState:
    """
    Damped Newton step w ← w - γ(∇²L(w) + ηI)⁻¹∇L(w), solved by CG

    Raises:
        ValueError: the oracle has no Hessian-vector product

    """

    if oracle.hvp is None:
        raise ValueError('newton: the oracle has no Hessian-vector product')

    g = _grad(state, oracle)
    w0 = state.w
    d, eta = dampedSolve(lambda v: oracle.hvp(w0, v), g, config.damping)
    gamma = _scaledStep(state, oracle.value, d, g, config)
    return replace(state, w=w0 - gamma * d, t=state.t + 1, grad=None,
                   damping=eta)


def gaussNewtonStep(state: OptState, f: Graph, loss: Graph,
                    config: StepConfig) -> OptState:
    """
    Gauss-Newton step on ℓ∘f with Levenberg-Marquardt damping

    Args:
        state (OptState): current state
        f (Graph): w -> z
        loss (Graph): z -> ℓ(z), convex
        config (StepConfig): damping η and stepsize

    """

    gn = GaussNewtonOracle(f, loss, state.w)
    g = gn.jac.adjointApply(gradient(loss, [gn.z]))
    d, eta = dampedSolve(gn.gnvp, g, config.damping)

    def objective(w):
        return float(loss.eval([f.eval([w])]))

    gamma = _scaledStep(state, objective, d, g, config)
    return replace(state, w=state.w - gamma * d, t=state.t + 1, grad=None,
                   damping=eta)


def naturalGradientStep(state: OptState, model: CategoricalModel,
                        config: StepConfig, numSamples: int = 1000,
                        seed: int = 0, exact: bool = False) -> OptState:
    """
    Natural gradient step w ← w - γ(F(w) + ηI)⁻¹∇L(w) with the Fisher
    matrix estimated from sampled labels

    Args:
        state (OptState): current state
        model (CategoricalModel): the likelihood; L is its NLL
        config (StepConfig): damping and stepsize
        numSamples (int): labels drawn for the Fisher estimate
        seed (int): RNG seed; the same labels serve every CG iteration
        exact (bool): sum over every label instead of sampling

    """

    w = state.w
    g = gradient(model.nllGraph(), [w])

    if exact:
        def fvp(v):
            return fisherVpExact(model, w, v)
    else:
        scores = sampledScores(model, w, numSamples, seed)

        def fvp(v):
            return (scores.T @ (scores @ v.ravel()) / numSamples) \
                .reshape(w.shape)

    d, eta = dampedSolve(fvp, g, config.damping)
    return replace(state, w=w - stepsizeAt(config, state.t) * d,
                   t=state.t + 1, grad=None, damping=eta)


def lbfgsApplyInverse(pairs: Sequence[CurvaturePair], g: Any) -> Tensor:
    """
    Two-loop recursion: H g for the LBFGS inverse-Hessian estimate H
    built from ``pairs`` (oldest first), with H_0 = <s, y>/<y, y> I
    from the newest pair, or I without pairs

    """

    q = asTensor(g).copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(np.vdot(s, q))
        q = q - a * y
        alphas.append(a)

    if pairs:
        s, y, _ = pairs[-1]
        q = q * (float(np.vdot(s, y)) / float(np.vdot(y, y)))

    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(np.vdot(y, q))
        q = q + (a - b) * s
    return q


def lbfgsStep(state: OptState, oracle: Oracle,
              config: StepConfig) -> OptState:
    """
    LBFGS step. Pairs with <s, y> <= 1e-12 are not stored.

    The step length is the config stepsize (linesearch none), found by
    Armijo backtracking from 1, or exact along d for quadratics, which
    needs the oracle's Hessian-vector product.

    """

    g = _grad(state, oracle)
    d = -lbfgsApplyInverse(state.pairs, g)
    if float(np.vdot(d, g)) >= 0:
        logger.debug('lbfgs: not a descent direction, using -g')
        d = -g

    if config.linesearch == 'exact':
        if oracle.hvp is None:
            raise ValueError('lbfgs: exact linesearch needs an hvp oracle')
        curv = float(np.vdot(d, oracle.hvp(state.w, d)))
        if curv <= 0.0:
            raise IndefiniteError(
                f'lbfgs: non-positive curvature {curv:.3e} along d', curv)
        gamma = -float(np.vdot(g, d)) / curv
    elif config.linesearch == 'armijo':
        gamma = armijoLinesearch(oracle.value, state.w, d, g, 1.0)
    else:
        gamma = stepsizeAt(config, state.t)

    w = state.w + gamma * d
    gNew = asTensor(oracle.grad(w))
    s, y = w - state.w, gNew - g
    sy = float(np.vdot(s, y))

    pairs = state.pairs
    if sy > CURVATURE_EPS:
        pairs = (pairs + (CurvaturePair(s, y, 1.0 / sy),))[-config.history:]
    else:
        logger.debug('lbfgs: skipped pair with <s, y> = %.3e', sy)

    return replace(state, w=w, t=state.t + 1, pairs=pairs, grad=gNew)


STEPS = {
    'gd': gdStep,
    'heavyball': heavyballStep,
    'nesterov': nesterovStep,
    'adam': adamStep,
    'projected': projectedStep,
    'prox': proxStep,
    'newton': newtonStep,
    'lbfgs': lbfgsStep,
}


class TraceRow(NamedTuple):
    iter: int
    w: Tensor
    objective: float
    gradnorm: float


def minimize(step: Callable, oracle: Oracle, w0: Any,
             maxIters: int = 100, gradTol: float = 1e-8) -> tuple:
    """
    Run a step function until the gradient norm drops to ``gradTol``
    or ``maxIters`` steps were taken

    Args:
        step (Callable): OptState -> OptState
        oracle (Oracle): objective, for the trace
        w0 (Any): starting point
        maxIters (int): step budget
        gradTol (float): stop once ||∇L(w)|| <= gradTol

    Returns:
        OptState: the final state
        list[TraceRow]: one row after every step

    """

    state = OptState.start(w0)
    trace: list = []
    if maxIters <= 0:
        return state, trace
    if float(np.linalg.norm(oracle.grad(state.w))) <= gradTol:
        return state, trace

    for it in range(1, maxIters + 1):
        state = step(state)
        value, gnorm = float(oracle.value(state.w)), \
            float(np.linalg.norm(oracle.grad(state.w)))
        trace.append(TraceRow(it, state.w, value, gnorm))
        logger.debug('minimize: iter %d objective %.6g gradnorm %.3e',
                     it, value, gnorm)
        if gnorm <= gradTol:
            break

    return state, trace


def dumpTraceCsv(trace: Sequence[TraceRow]) -> str:
    lines = ['iter,objective,gradnorm']
    lines += [f'{r.iter},{r.objective!r},{r.gradnorm!r}' for r in trace]
    return '\n'.join(lines)
