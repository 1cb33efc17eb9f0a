"""
Integration of s'(t) = h(t, s(t), w) on [0, T] and its sensitivities.

The dynamics h is a graph with inputs (t, s, w) so both partial
derivatives in s and w are available as VJPs. Steps are uniform,
δ = T / K.

"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Optional
import logging

import numpy as np

from .autodiff import vjp
from .checkpoint import STRATEGIES, ChainProgram, vjpTreeverse
from .errors import NumericError, ShapeError
from .graph import Graph, Tensor, asTensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """
    An initial value problem with parameters

    Attributes:
        dynamics (Graph): h, with inputs (t, s, w) and output of s's shape
        T (float): horizon
        x (Tensor): initial state s(0)
        w (Tensor): parameters

    """

    dynamics: Graph
    T: float
    x: Any
    w: Any

    def __post_init__(self) -> None:
        object.__setattr__(self, 'x', asTensor(self.x))
        object.__setattr__(self, 'w', asTensor(self.w))

        g = self.dynamics
        if g.numInputs != 3:
            raise ValueError('ode: dynamics must take (t, s, w)')
        shapes = [tuple(s) for s in g.inputShapes]
        if shapes != [(), self.x.shape, self.w.shape] \
                or g.outputShape != self.x.shape:
            raise ShapeError(
                f'ode: dynamics has inputs {shapes} and output '
                f'{g.outputShape}, state {self.x.shape}, '
                f'parameters {self.w.shape}')
        if not self.T > 0:
            raise ValueError(f'ode: horizon must be positive, got {self.T}')

    def h(self, t: float, s: Tensor, w: Optional[Tensor] = None) -> Tensor:
        return self.dynamics.eval([t, s, self.w if w is None else w])

    def vectorField(self) -> Callable:
        return lambda t, s: self.h(t, s)

    def withParams(self, x: Any = None, w: Any = None) -> OdeProblem:
        return OdeProblem(self.dynamics, self.T,
                          self.x if x is None else x,
                          self.w if w is None else w)


class Trajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> Tensor:
        return self.states[-1]


def _checkSteps(op: str, K: int) -> None:
    if K < 1:
        raise ValueError(f'{op}: need K >= 1 steps, got {K}')


def _finite(op: str, s: Tensor, k: int) -> Tensor:
    if not np.all(np.isfinite(s)):
        raise NumericError(f'{op}: state is not finite at step {k}', k)
    return s


def eulerStep(problem: OdeProblem, t: float, s: Any, delta: float) -> Tensor:
    return asTensor(s) + delta * problem.h(t, asTensor(s))


def eulerIntegrate(problem: OdeProblem, K: int) -> Trajectory:
    """
    Explicit Euler: s_k = s_{k-1} + δ h(t_{k-1}, s_{k-1}, w)

    Returns:
        Trajectory: times t_0..t_K and states s_0..s_K

    Raises:
        NumericError: the state stopped being finite

    """

    _checkSteps('euler', K)
    delta = problem.T / K
    states = [problem.x]
    for k in range(1, K + 1):
        try:
            s = eulerStep(problem, (k - 1) * delta, states[-1], delta)
        except NumericError as e:
            raise NumericError(f'euler: step {k}: {e}', k)
        states.append(_finite('euler', s, k))
    return Trajectory(np.arange(K + 1) * delta, np.stack(states))


def adjointGradient(problem: OdeProblem, lossGrad: Callable, K: int) -> tuple:
    """
    Gradient of L(s(T)) by the continuous adjoint method, both ODEs
    discretized with explicit Euler

    The backward pass integrates the state backward in time,
    ŝ_{k-1} = ŝ_k - δ h(t_k, ŝ_k), instead of storing the forward
    trajectory, so ŝ_0 only approximates x.

    Args:
        problem (OdeProblem): the problem
        lossGrad (Callable): s(T) -> ∇L(s(T))
        K (int): number of steps

    Returns:
        Tensor: gradient w.r.t. x
        Tensor: gradient w.r.t. w

    """

    _checkSteps('adjoint_gradient', K)
    delta = problem.T / K
    s = eulerIntegrate(problem, K).final
    r = asTensor(lossGrad(s))
    g = np.zeros(problem.w.shape)

    for k in range(K, 0, -1):
        t = k * delta
        inputs = [t, s, problem.w]
        _, rs, rw = vjp(problem.dynamics, inputs, r)
        hs = problem.dynamics.eval(inputs)
        s = _finite('adjoint_gradient', s - delta * hs, k - 1)
        r = r + delta * rs
        g = g + delta * rw

    logger.debug('adjoint_gradient: K=%d, backward drift %.3e', K,
                 float(np.max(np.abs(s - problem.x), initial=0.0)))
    return r, g


def _augment(s: Tensor, w: Tensor) -> Tensor:
    return np.concatenate([np.ravel(s), np.ravel(w)])


def _unaugment(problem: OdeProblem, z: Tensor) -> tuple:
    n = problem.x.size
    return (z[:n].reshape(problem.x.shape),
            z[n:].reshape(problem.w.shape))


def unrolledChain(problem: OdeProblem, K: int) -> ChainProgram:
    """
    The Euler discretization as a chain over z = (s, w), with w
    carried unchanged, so reverse mode over the chain gives the
    gradient of the discretized objective in both x and w

    """

    _checkSteps('unrolled', K)
    delta = problem.T / K

    def step(k, z):
        s, w = _unaugment(problem, z)
        return _augment(s + delta * problem.h((k - 1) * delta, s, w), w)

    def stepVjp(k, z, r):
        s, w = _unaugment(problem, z)
        rs, rw = _unaugment(problem, r)
        _, gs, gw = vjp(problem.dynamics, [(k - 1) * delta, s, w], rs)
        return _augment(rs + delta * gs, rw + delta * gw)

    return ChainProgram(K, step, stepVjp)


def unrolledGradient(problem: OdeProblem, lossGrad: Callable, K: int,
                     strategy: str = 'full_cache',
                     slots: Optional[int] = None) -> tuple:
    """
    Gradient of L(s_K) for the Euler-discretized problem by reverse
    mode over the unrolled steps

    Args:
        problem (OdeProblem): the problem
        lossGrad (Callable): s_K -> ∇L(s_K)
        K (int): number of steps
        strategy (str): full_cache, full_recompute, halving or treeverse
        slots (Optional[int]): memory slots for treeverse

    Returns:
        Tensor: gradient w.r.t. x
        Tensor: gradient w.r.t. w

    """

    chain = unrolledChain(problem, K)
    z0 = _augment(problem.x, problem.w)
    sK = eulerIntegrate(problem, K).final
    u = _augment(asTensor(lossGrad(sK)), np.zeros(problem.w.shape))

    if strategy == 'treeverse':
        if slots is None:
            raise ValueError('unrolled_gradient: treeverse needs slots')
        r, counters = vjpTreeverse(chain, z0, u, slots)
    elif strategy in STRATEGIES:
        r, counters = STRATEGIES[strategy](chain, z0, u)
    else:
        raise ValueError(
            f'unrolled_gradient: unknown strategy {strategy}, choose from '
            f'{", ".join(list(STRATEGIES) + ["treeverse"])}')

    logger.debug('unrolled_gradient: K=%d %s, %d calls, %d slots', K,
                 strategy, counters.calls, counters.peakSlots)
    return _unaugment(problem, r)


class LeapfrogState(NamedTuple):
    t: float
    s: Tensor
    c: Tensor


def leapfrogStep(state: LeapfrogState, h: Callable,
                 delta: float) -> LeapfrogState:
    """
    One asynchronous leapfrog step

    The position half-steps use the old and then the new velocity,
    so the step with -δ undoes the step with δ.

    Args:
        state (LeapfrogState): (t, s, c)
        h (Callable): (t, s) -> ds/dt
        delta (float): the step, nonzero

    """

    if delta == 0:
        raise ValueError('leapfrog: step must be nonzero')
    half = 0.5 * delta
    tMid = state.t + half
    sMid = asTensor(state.s) + half * asTensor(state.c)
    cMid = asTensor(h(tMid, sMid))
    c = 2.0 * cMid - state.c
    return LeapfrogState(tMid + half, sMid + half * c, c)


def leapfrogInverse(state: LeapfrogState, h: Callable,
                    delta: float) -> LeapfrogState:
    return leapfrogStep(state, h, -delta)


def leapfrogStart(h: Callable, t0: float, s0: Any) -> LeapfrogState:
    s0 = asTensor(s0)
    return LeapfrogState(t0, s0, asTensor(h(t0, s0)))


def leapfrogIntegrate(problem: OdeProblem, K: int) -> tuple:
    """
    Leapfrog integration from c_0 = h(0, x)

    Returns:
        Trajectory: times and states
        LeapfrogState: the final (t, s, c)

    """

    _checkSteps('leapfrog', K)
    h = problem.vectorField()
    delta = problem.T / K
    state = leapfrogStart(h, 0.0, problem.x)
    times, states = [state.t], [state.s]
    for k in range(1, K + 1):
        state = leapfrogStep(state, h, delta)
        times.append(state.t)
        states.append(_finite('leapfrog', state.s, k))
    return Trajectory(np.array(times), np.stack(states)), state


def dumpTrajectoryCsv(traj: Trajectory) -> str:
    states = traj.states.reshape(len(traj.times), -1)
    if traj.states.ndim == 1:
        header = 't,s'
    else:
        header = 't,' + ','.join(f's{i}' for i in range(states.shape[1]))
    lines = [header]
    for t, s in zip(traj.times, states):
        lines.append(','.join(repr(float(v)) for v in (t, *s)))
    return '\n'.join(lines)
