"""
Forward-mode (JVP) and reverse-mode (VJP) differentiation of graphs.

The numeric passes (``jvp``, ``vjp``, ``gradient``) evaluate derivative
rules on arrays. The graph transforms (``jvpGraph``, ``vjpGraph``,
``gradGraph``) emit the derivative program as a new ``Graph`` so that
passes can be composed, e.g. a JVP of a gradient.

Reverse mode keeps every intermediate value (full caching);
memory-saving schedules live in ``checkpoint``.

"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Sequence
import logging

import numpy as np

from .graph import NUMERIC, Graph, GraphBuilder, LinearMap, Tensor
from .graph import asTensor, jvpRule, replayGraph, vjpRule
from .estimators import EstimatorReport, makeRng

logger = logging.getLogger(__name__)


@dataclass
class TangentTrace:
    """
    Values s_k and directional derivatives t_k of every node.
    A tangent of None stands for zero.

    """

    values: list
    tangents: list


@dataclass
class AdjointTrace:
    """
    Values s_k and accumulated adjoints r_k of every node.
    An adjoint of None stands for zero.

    """

    values: list
    adjoints: list


def _zerosLike(x: Tensor) -> Tensor:
    return np.zeros(np.shape(x))


def _checkDirection(op: str, what: str, d: Any, shape: tuple) -> Tensor:
    d = asTensor(d)
    if d.shape != tuple(shape):
        raise ValueError(
            f'{op}: {what} has shape {d.shape}, expected {tuple(shape)}')
    return d


def tangentTrace(graph: Graph, values: list,
                 directions: Sequence[Any]) -> TangentTrace:
    """
    Propagate input directions forward through an evaluated trace

    """

    if len(directions) != graph.numInputs:
        raise ValueError(
            f'jvp: expected {graph.numInputs} directions, '
            f'got {len(directions)}')

    tangents: list = []
    for k, (prim, parents) in enumerate(graph.nodes):
        if prim.kind == 'input':
            d = directions[k]
            tangents.append(None if d is None else _checkDirection(
                'jvp', f'direction {k}', d, values[k].shape))
            continue

        ts = [tangents[p] for p in parents]
        if all(t is None for t in ts):
            tangents.append(None)
            continue

        rule = jvpRule(prim.kind)
        t = rule(NUMERIC, prim.attrs, [values[p] for p in parents],
                 values[k], ts)
        tangents.append(None if t is None else asTensor(t))

    return TangentTrace(values, tangents)


def adjointTrace(graph: Graph, values: list,
                 outDirection: Any) -> AdjointTrace:
    """
    Pull an output direction back through an evaluated trace,
    summing the contributions of every child into its parents

    """

    out = graph.output
    u = _checkDirection('vjp', 'output direction', outDirection,
                        values[out].shape)

    adjoints: list = [None] * len(graph.nodes)
    adjoints[out] = u

    for k in range(out, -1, -1):
        prim, parents = graph.nodes[k]
        r = adjoints[k]
        if r is None or not parents:
            continue

        rule = vjpRule(prim.kind)
        grads = rule(NUMERIC, prim.attrs, [values[p] for p in parents],
                     values[k], r)

        for p, g in zip(parents, grads):
            if g is None:
                continue
            g = asTensor(g)
            adjoints[p] = g if adjoints[p] is None else adjoints[p] + g

    return AdjointTrace(values, adjoints)


def jvp(graph: Graph, inputs: Sequence[Any],
        directions: Sequence[Any]) -> Tensor:
    """
    Forward-mode directional derivative ∂f(s_0)[v]

    Args:
        graph (Graph): the program
        inputs (Sequence[Any]): one value per input node
        directions (Sequence[Any]): one direction per input node,
            None meaning zero

    Returns:
        Tensor: the output tangent

    Raises:
        MissingRuleError: a primitive has no JVP rule

    """

    values = graph.trace(inputs)
    t = tangentTrace(graph, values, directions).tangents[graph.output]
    return _zerosLike(values[graph.output]) if t is None else t


def vjp(graph: Graph, inputs: Sequence[Any], outDirection: Any) -> list:
    """
    Reverse-mode vector-Jacobian product ∂f(s_0)*[u]

    Args:
        graph (Graph): the program
        inputs (Sequence[Any]): one value per input node
        outDirection (Any): cotangent u of the output shape

    Returns:
        list[Tensor]: one cotangent per input node

    Raises:
        MissingRuleError: a primitive has no VJP rule

    """

    values = graph.trace(inputs)
    adj = adjointTrace(graph, values, outDirection).adjoints
    return [_zerosLike(values[i]) if adj[i] is None else adj[i]
            for i in range(graph.numInputs)]


def _checkScalar(op: str, graph: Graph) -> None:
    shape = graph.outputShape
    if shape != ():
        raise ValueError(f'{op}: output must be a scalar, got shape {shape}')


def gradient(graph: Graph, inputs: Sequence[Any], argnum: int = 0) -> Tensor:
    """
    Gradient of a scalar-output program w.r.t. input ``argnum``

    """

    _checkScalar('gradient', graph)
    return vjp(graph, inputs, 1.0)[argnum]


def valueAndGradient(graph: Graph, inputs: Sequence[Any],
                     argnum: int = 0) -> tuple:
    _checkScalar('gradient', graph)
    values = graph.trace(inputs)
    adj = adjointTrace(graph, values, 1.0).adjoints
    g = adj[argnum]
    return (float(values[graph.output]),
            _zerosLike(values[argnum]) if g is None else g)


def jacobianMap(graph: Graph, inputs: Sequence[Any],
                argnum: int = 0) -> LinearMap:
    """
    The linearization of the program at ``inputs`` w.r.t. one input:
    apply is a JVP, the adjoint is a VJP. The forward trace is
    computed once and shared by every application.

    """

    values = graph.trace(inputs)
    inShape = values[argnum].shape
    outShape = values[graph.output].shape

    def applyFn(v: Tensor) -> Tensor:
        dirs: list = [None] * graph.numInputs
        dirs[argnum] = v
        t = tangentTrace(graph, values, dirs).tangents[graph.output]
        return np.zeros(outShape) if t is None else t

    def adjointFn(u: Tensor) -> Tensor:
        g = adjointTrace(graph, values, u).adjoints[argnum]
        return np.zeros(inShape) if g is None else g

    return LinearMap(inShape, outShape, applyFn, adjointFn)


def jvpGraph(graph: Graph) -> Graph:
    """
    Derivative program of forward mode

    Returns:
        Graph: inputs (x_1..x_n, t_1..t_n), output ∂f(x)[t]

    """

    b = GraphBuilder()
    shapes = graph.inputShapes
    xs = [b.input(s) for s in shapes]
    ts = [b.input(s) for s in shapes]
    ids = replayGraph(b, graph, xs)

    tangents: list = []
    for k, (prim, parents) in enumerate(graph.nodes):
        if prim.kind == 'input':
            tangents.append(ts[k])
            continue
        pts = [tangents[p] for p in parents]
        if all(t is None for t in pts):
            tangents.append(None)
            continue
        tangents.append(jvpRule(prim.kind)(
            b, prim.attrs, [ids[p] for p in parents], ids[k], pts))

    out = tangents[graph.output]
    if out is None:
        out = b.zeros(b.shape(ids[graph.output]))
    return b.build(out)


def _pullback(b: GraphBuilder, graph: Graph, ids: list, u: int) -> list:
    adjoints: list = [None] * len(graph.nodes)
    adjoints[graph.output] = u

    for k in range(graph.output, -1, -1):
        prim, parents = graph.nodes[k]
        r = adjoints[k]
        if r is None or not parents:
            continue
        grads = vjpRule(prim.kind)(
            b, prim.attrs, [ids[p] for p in parents], ids[k], r)
        for p, g in zip(parents, grads):
            if g is None:
                continue
            adjoints[p] = g if adjoints[p] is None else b.add(adjoints[p], g)

    return adjoints


def vjpGraph(graph: Graph, argnum: int = 0) -> Graph:
    """
    Derivative program of reverse mode

    Returns:
        Graph: inputs (x_1..x_n, u), output ∂_argnum f(x)*[u]

    """

    b = GraphBuilder()
    shapes = graph.inputShapes
    xs = [b.input(s) for s in shapes]
    u = b.input(graph.outputShape)
    ids = replayGraph(b, graph, xs)

    g = _pullback(b, graph, ids, u)[argnum]
    if g is None:
        g = b.zeros(shapes[argnum])
    return b.build(g)


def gradGraph(graph: Graph, argnum: int = 0) -> Graph:
    """
    Gradient program of a scalar-output graph

    Returns:
        Graph: same inputs as ``graph``, output ∇_argnum f(x)

    """

    _checkScalar('gradient', graph)

    b = GraphBuilder()
    shapes = graph.inputShapes
    xs = [b.input(s) for s in shapes]
    ids = replayGraph(b, graph, xs)

    g = _pullback(b, graph, ids, b.constant(1.0))[argnum]
    if g is None:
        g = b.zeros(shapes[argnum])
    return b.build(g)


@dataclass(frozen=True)
class FeedforwardSpec:
    """
    A feedforward network s_k = f_k(s_{k-1}, w_k)

    Attributes:
        layers (list[Graph]): layer programs with inputs (s, w)
        params (list[Tensor]): parameters w_1..w_K
        x (Tensor): the network input s_0

    """

    layers: list
    params: list
    x: Any

    def __post_init__(self) -> None:
        if len(self.layers) != len(self.params):
            raise ValueError(
                f'feedforward: {len(self.layers)} layers but '
                f'{len(self.params)} parameter slots')
        for k, layer in enumerate(self.layers):
            if layer.numInputs != 2:
                raise ValueError(
                    f'feedforward: layer {k + 1} must take (s, w)')

    def forward(self) -> list:
        """
        Returns:
            list[Tensor]: states s_0..s_K

        """

        states = [asTensor(self.x)]
        for layer, w in zip(self.layers, self.params):
            states.append(layer.eval([states[-1], w]))
        return states


def backpropFeedforward(spec: FeedforwardSpec, lossGrad: Any) -> tuple:
    """
    Gradient back-propagation through a feedforward network

    Args:
        spec (FeedforwardSpec): the network
        lossGrad (Any): r_K, the cotangent of the network output

    Returns:
        Tensor: r_0, the gradient w.r.t. the input
        list[Tensor]: g_1..g_K, the parameter gradients

    """

    states = spec.forward()
    r = asTensor(lossGrad)
    grads: list = [None] * len(spec.layers)

    for k in range(len(spec.layers) - 1, -1, -1):
        r, grads[k] = vjp(spec.layers[k], [states[k], spec.params[k]], r)

    return r, grads


def flattenFeedforward(spec: FeedforwardSpec) -> Graph:
    """
    One graph with inputs (x, w_1..w_K) equivalent to the network

    """

    b = GraphBuilder()
    s = b.input(np.shape(spec.x))
    ws = [b.input(np.shape(w)) for w in spec.params]
    for layer, w in zip(spec.layers, ws):
        s = replayGraph(b, layer, [s, w])[layer.output]
    return b.build(s)


def randomizedForwardGradient(graph: Graph, inputs: Sequence[Any],
                              numSamples: int, seed: int,
                              argnum: int = 0) -> EstimatorReport:
    """
    Unbiased gradient estimate E[∂f(x)[Z] Z] with Z ~ N(0, I),
    using forward mode only

    Args:
        graph (Graph): scalar-output program
        inputs (Sequence[Any]): evaluation point
        numSamples (int): number of directions, one JVP each
        seed (int): RNG seed

    Returns:
        EstimatorReport: estimate, per-coordinate variance of the mean

    """

    _checkScalar('randomized_forward_gradient', graph)
    if numSamples <= 0:
        raise ValueError('randomized_forward_gradient: numSamples must be > 0')

    values = graph.trace(inputs)
    shape = values[argnum].shape

    rng = makeRng(seed)
    samples = np.zeros((numSamples, *shape))
    for i in range(numSamples):
        z = rng.standard_normal(shape)
        dirs: list = [None] * graph.numInputs
        dirs[argnum] = z
        t = tangentTrace(graph, values, dirs).tangents[graph.output]
        if t is not None:
            samples[i] = float(t) * z

    logger.debug('forward gradient: %d samples in dimension %d',
                 numSamples, int(np.prod(shape)))

    return EstimatorReport.fromSamples(samples, seed)
