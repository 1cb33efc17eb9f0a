"""
Computation-graph IR over dense real tensors.

A program is an immutable ``Graph``: an ordered list of nodes, each a
``Primitive`` applied to the values of earlier nodes. Root nodes
(kind ``input``) come first, one per program argument.

Derivative rules are written once against the ``Ops`` interface and are
shared by two backends: ``NumericOps`` evaluates them on numpy arrays
and ``GraphBuilder`` records them as new graph nodes, so derivative
programs are graphs themselves and can be differentiated again.

"""

from __future__ import annotations
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Optional, Sequence
import json
import logging

import numpy as np
from scipy.special import expit, logsumexp

from .errors import GraphParseError, MissingRuleError, NumericError
from .errors import ShapeError

logger = logging.getLogger(__name__)

Tensor = np.ndarray
Shape = tuple


def asTensor(x: Any) -> Tensor:
    """
    Convert a scalar, nested list or array to a float64 tensor

    """

    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Primitive:
    """
    A primitive operation

    Attributes:
        kind (str): one of the keys of ``RULES``
        attrs (dict[str, Any]): kind-specific parameters, e.g.
            ``name`` for elementwise and reduce, ``start``/``stop``
            for slice, ``shape`` for input and reshape, ``value``
            for constant

    """

    kind: str
    attrs: dict = field(default_factory=dict)

    def __str__(self) -> str:
        if 'name' in self.attrs:
            return f'{self.kind}({self.attrs["name"]})'
        return self.kind


class Node(NamedTuple):
    prim: Primitive
    parents: tuple


class Ops(ABC):
    """
    The operations derivative rules are allowed to use.
    A value is whatever the backend uses to denote a tensor.

    """

    @abstractmethod
    def shape(self, x: Any) -> Shape:
        pass

    @abstractmethod
    def constant(self, value: Any) -> Any:
        pass

    @abstractmethod
    def apply(self, kind: str, attrs: dict, xs: Sequence[Any]) -> Any:
        pass

    def add(self, a: Any, b: Any) -> Any:
        return self.apply('add', {}, [a, b])

    def mul(self, a: Any, b: Any) -> Any:
        return self.apply('mul', {}, [a, b])

    def matvec(self, w: Any, x: Any) -> Any:
        return self.apply('matvec', {}, [w, x])

    def matmul(self, a: Any, b: Any) -> Any:
        return self.apply('matmul', {}, [a, b])

    def elementwise(self, name: str, x: Any) -> Any:
        return self.apply('elementwise', {'name': name}, [x])

    def reduce(self, name: str, x: Any) -> Any:
        return self.apply('reduce', {'name': name}, [x])

    def concat(self, xs: Sequence[Any]) -> Any:
        return self.apply('concat', {}, list(xs))

    def slice(self, x: Any, start: int, stop: int) -> Any:
        return self.apply('slice', {'start': start, 'stop': stop}, [x])

    def dup(self, x: Any) -> Any:
        return self.apply('dup', {}, [x])

    def transpose(self, x: Any) -> Any:
        return self.apply('transpose', {}, [x])

    def reshape(self, x: Any, shape: Sequence[int]) -> Any:
        return self.apply('reshape', {'shape': tuple(shape)}, [x])

    def neg(self, x: Any) -> Any:
        return self.elementwise('neg', x)

    def sub(self, a: Any, b: Any) -> Any:
        return self.add(a, self.neg(b))

    def scale(self, c: float, x: Any) -> Any:
        return self.mul(self.constant(c), x)

    def zeros(self, shape: Sequence[int]) -> Any:
        return self.constant(np.zeros(tuple(shape)))


class NumericOps(Ops):
    def shape(self, x: Any) -> Shape:
        return np.shape(x)

    def constant(self, value: Any) -> Tensor:
        return asTensor(value)

    def apply(self, kind: str, attrs: dict, xs: Sequence[Any]) -> Tensor:
        rule = getRule(kind)
        rule.shape(attrs, [np.shape(x) for x in xs])
        return rule.apply(attrs, xs)


NUMERIC = NumericOps()


# Shape signatures

def _broadcastShape(attrs: dict, shapes: list) -> Shape:
    a, b = shapes
    if a == b or b == ():
        return a
    if a == ():
        return b
    raise ShapeError(f'operands {a} and {b} do not conform')


def _matvecShape(attrs: dict, shapes: list) -> Shape:
    w, x = shapes
    if len(w) != 2 or len(x) != 1 or w[1] != x[0]:
        raise ShapeError(f'cannot multiply {w} by vector {x}')
    return (w[0],)


def _matmulShape(attrs: dict, shapes: list) -> Shape:
    a, b = shapes
    if len(a) != 2 or len(b) != 2 or a[1] != b[0]:
        raise ShapeError(f'cannot multiply {a} by {b}')
    return (a[0], b[1])


def _elementwiseShape(attrs: dict, shapes: list) -> Shape:
    name = attrs.get('name')
    if name not in ELEMENTWISE:
        raise ValueError(f'unknown elementwise function {name}')
    return shapes[0]


def _reduceShape(attrs: dict, shapes: list) -> Shape:
    name = attrs.get('name')
    if name not in ('sum', 'logsumexp'):
        raise ValueError(f'unknown reduction {name}')
    if name == 'logsumexp' and int(np.prod(shapes[0])) == 0:
        raise ShapeError('logsumexp of an empty tensor')
    return ()


def _concatShape(attrs: dict, shapes: list) -> Shape:
    if not shapes:
        raise ShapeError('concat needs at least one operand')
    tail = shapes[0][1:]
    for s in shapes:
        if len(s) == 0 or s[1:] != tail:
            raise ShapeError(f'cannot concatenate {shapes}')
    return (sum(s[0] for s in shapes), *tail)


def _sliceShape(attrs: dict, shapes: list) -> Shape:
    (s,) = shapes
    start, stop = attrs['start'], attrs['stop']
    if len(s) == 0 or not 0 <= start <= stop <= s[0]:
        raise ShapeError(f'slice [{start}:{stop}] out of range for {s}')
    return (stop - start, *s[1:])


def _transposeShape(attrs: dict, shapes: list) -> Shape:
    (s,) = shapes
    if len(s) != 2:
        raise ShapeError(f'transpose expects a matrix, got {s}')
    return (s[1], s[0])


def _reshapeShape(attrs: dict, shapes: list) -> Shape:
    target = tuple(attrs['shape'])
    if int(np.prod(target)) != int(np.prod(shapes[0])):
        raise ShapeError(f'cannot reshape {shapes[0]} to {target}')
    return target


def _sameShape(attrs: dict, shapes: list) -> Shape:
    return shapes[0]


# Elementwise functions and their derivatives expressed with Ops,
# given the argument x and the output y

def _softplus(x: Tensor) -> Tensor:
    return np.logaddexp(0.0, x)


def _step(x: Tensor) -> Tensor:
    # step(0) = 1, the right derivative of relu
    return (np.asarray(x) >= 0).astype(np.float64)


ELEMENTWISE: dict[str, Callable[[Tensor], Tensor]] = {
    'exp': np.exp,
    'log': np.log,
    'sin': np.sin,
    'cos': np.cos,
    'tanh': np.tanh,
    'sqrt': np.sqrt,
    'square': np.square,
    'neg': np.negative,
    'inv': np.reciprocal,
    'logistic': expit,
    'softplus': _softplus,
    'relu': lambda x: np.maximum(x, 0.0),
    'step': _step,
}

ELEMENTWISE_DERIVS: dict[str, Callable[[Ops, Any, Any], Any]] = {
    'exp': lambda o, x, y: y,
    'log': lambda o, x, y: o.elementwise('inv', x),
    'sin': lambda o, x, y: o.elementwise('cos', x),
    'cos': lambda o, x, y: o.neg(o.elementwise('sin', x)),
    'tanh': lambda o, x, y: o.sub(o.constant(1.0), o.elementwise('square', y)),
    'sqrt': lambda o, x, y: o.scale(0.5, o.elementwise('inv', y)),
    'square': lambda o, x, y: o.scale(2.0, x),
    'neg': lambda o, x, y: o.constant(-1.0),
    'inv': lambda o, x, y: o.neg(o.elementwise('square', y)),
    'logistic': lambda o, x, y: o.mul(y, o.sub(o.constant(1.0), y)),
    'softplus': lambda o, x, y: o.elementwise('logistic', x),
    'relu': lambda o, x, y: o.elementwise('step', x),
    'step': lambda o, x, y: None,
}


def _plus(ops: Ops, a: Any, b: Any) -> Any:
    """
    Sum of two possibly-zero (None) terms

    """

    if a is None:
        return b
    if b is None:
        return a
    return ops.add(a, b)


def _unbroadcast(ops: Ops, g: Any, shape: Shape) -> Any:
    if g is None or ops.shape(g) == tuple(shape):
        return g
    return ops.reduce('sum', g)


def _broadcastTo(ops: Ops, t: Any, shape: Shape) -> Any:
    if t is None or ops.shape(t) == tuple(shape):
        return t
    return ops.mul(t, ops.constant(np.ones(shape)))


def _addJvp(ops, attrs, xs, out, ts):
    return _broadcastTo(ops, _plus(ops, ts[0], ts[1]), ops.shape(out))


def _addVjp(ops, attrs, xs, out, u):
    return [_unbroadcast(ops, u, ops.shape(x)) for x in xs]


def _mulJvp(ops, attrs, xs, out, ts):
    a, b = xs
    ta = None if ts[0] is None else ops.mul(ts[0], b)
    tb = None if ts[1] is None else ops.mul(a, ts[1])
    return _plus(ops, ta, tb)


def _mulVjp(ops, attrs, xs, out, u):
    a, b = xs
    return [_unbroadcast(ops, ops.mul(u, b), ops.shape(a)),
            _unbroadcast(ops, ops.mul(u, a), ops.shape(b))]


def _matvecJvp(ops, attrs, xs, out, ts):
    w, x = xs
    tw = None if ts[0] is None else ops.matvec(ts[0], x)
    tx = None if ts[1] is None else ops.matvec(w, ts[1])
    return _plus(ops, tw, tx)


def _matvecVjp(ops, attrs, xs, out, u):
    w, x = xs
    m, n = ops.shape(w)
    wBar = ops.matmul(ops.reshape(u, (m, 1)), ops.reshape(x, (1, n)))
    return [wBar, ops.matvec(ops.transpose(w), u)]


def _matmulJvp(ops, attrs, xs, out, ts):
    a, b = xs
    ta = None if ts[0] is None else ops.matmul(ts[0], b)
    tb = None if ts[1] is None else ops.matmul(a, ts[1])
    return _plus(ops, ta, tb)


def _matmulVjp(ops, attrs, xs, out, u):
    a, b = xs
    return [ops.matmul(u, ops.transpose(b)), ops.matmul(ops.transpose(a), u)]


def _elementwiseJvp(ops, attrs, xs, out, ts):
    if ts[0] is None:
        return None
    d = ELEMENTWISE_DERIVS[attrs['name']](ops, xs[0], out)
    return None if d is None else ops.mul(d, ts[0])


def _elementwiseVjp(ops, attrs, xs, out, u):
    d = ELEMENTWISE_DERIVS[attrs['name']](ops, xs[0], out)
    return [None if d is None else ops.mul(d, u)]


def _softmaxOf(ops, x, lse):
    return ops.elementwise('exp', ops.sub(x, lse))


def _reduceJvp(ops, attrs, xs, out, ts):
    if ts[0] is None:
        return None
    if attrs['name'] == 'sum':
        return ops.reduce('sum', ts[0])
    return ops.reduce('sum', ops.mul(_softmaxOf(ops, xs[0], out), ts[0]))


def _reduceVjp(ops, attrs, xs, out, u):
    x = xs[0]
    if attrs['name'] == 'sum':
        return [_broadcastTo(ops, u, ops.shape(x))]
    return [ops.mul(u, _softmaxOf(ops, x, out))]


def _concatJvp(ops, attrs, xs, out, ts):
    if all(t is None for t in ts):
        return None
    parts = [ops.zeros(ops.shape(x)) if t is None else t
             for x, t in zip(xs, ts)]
    return ops.concat(parts)


def _concatVjp(ops, attrs, xs, out, u):
    grads = []
    start = 0
    for x in xs:
        stop = start + ops.shape(x)[0]
        grads.append(ops.slice(u, start, stop))
        start = stop
    return grads


def _sliceJvp(ops, attrs, xs, out, ts):
    if ts[0] is None:
        return None
    return ops.slice(ts[0], attrs['start'], attrs['stop'])


def _sliceVjp(ops, attrs, xs, out, u):
    shape = ops.shape(xs[0])
    start, stop = attrs['start'], attrs['stop']
    parts = []
    if start > 0:
        parts.append(ops.zeros((start, *shape[1:])))
    parts.append(u)
    if stop < shape[0]:
        parts.append(ops.zeros((shape[0] - stop, *shape[1:])))
    return [parts[0] if len(parts) == 1 else ops.concat(parts)]


def _dupJvp(ops, attrs, xs, out, ts):
    return ts[0]


def _dupVjp(ops, attrs, xs, out, u):
    return [u]


def _transposeJvp(ops, attrs, xs, out, ts):
    return None if ts[0] is None else ops.transpose(ts[0])


def _transposeVjp(ops, attrs, xs, out, u):
    return [ops.transpose(u)]


def _reshapeJvp(ops, attrs, xs, out, ts):
    return None if ts[0] is None else ops.reshape(ts[0], attrs['shape'])


def _reshapeVjp(ops, attrs, xs, out, u):
    return [ops.reshape(u, ops.shape(xs[0]))]


@dataclass(frozen=True)
class Rule:
    """
    Everything the toolkit knows about a primitive kind

    Attributes:
        arity (Optional[int]): number of parents, None if variadic
        shape: (attrs, parent shapes) -> output shape
        apply: (attrs, parent values) -> output value
        jvp: (ops, attrs, xs, out, tangents) -> output tangent or None
        vjp: (ops, attrs, xs, out, cotangent) -> parent cotangents

    """

    arity: Optional[int]
    shape: Callable
    apply: Callable
    jvp: Optional[Callable] = None
    vjp: Optional[Callable] = None


def _noParentsShape(attrs: dict, shapes: list) -> Shape:
    if 'value' in attrs:
        return np.shape(attrs['value'])
    return tuple(attrs['shape'])


RULES: dict[str, Rule] = {
    'input': Rule(0, _noParentsShape, None),
    'constant': Rule(0, _noParentsShape,
                     lambda a, xs: asTensor(a['value'])),
    'add': Rule(2, _broadcastShape,
                lambda a, xs: np.add(xs[0], xs[1]), _addJvp, _addVjp),
    'mul': Rule(2, _broadcastShape,
                lambda a, xs: np.multiply(xs[0], xs[1]), _mulJvp, _mulVjp),
    'matvec': Rule(2, _matvecShape,
                   lambda a, xs: np.dot(xs[0], xs[1]),
                   _matvecJvp, _matvecVjp),
    'matmul': Rule(2, _matmulShape,
                   lambda a, xs: np.matmul(xs[0], xs[1]),
                   _matmulJvp, _matmulVjp),
    'elementwise': Rule(1, _elementwiseShape,
                        lambda a, xs: asTensor(ELEMENTWISE[a['name']](xs[0])),
                        _elementwiseJvp, _elementwiseVjp),
    'reduce': Rule(1, _reduceShape,
                   lambda a, xs: asTensor(
                       np.sum(xs[0]) if a['name'] == 'sum'
                       else logsumexp(xs[0])),
                   _reduceJvp, _reduceVjp),
    'concat': Rule(None, _concatShape,
                   lambda a, xs: np.concatenate(xs, axis=0),
                   _concatJvp, _concatVjp),
    'slice': Rule(1, _sliceShape,
                  lambda a, xs: np.array(xs[0][a['start']:a['stop']]),
                  _sliceJvp, _sliceVjp),
    'dup': Rule(1, _sameShape, lambda a, xs: np.array(xs[0]),
                _dupJvp, _dupVjp),
    'transpose': Rule(1, _transposeShape,
                      lambda a, xs: np.ascontiguousarray(xs[0].T),
                      _transposeJvp, _transposeVjp),
    'reshape': Rule(1, _reshapeShape,
                    lambda a, xs: np.reshape(xs[0], tuple(a['shape'])),
                    _reshapeJvp, _reshapeVjp),
}


def getRule(kind: str) -> Rule:
    try:
        return RULES[kind]
    except KeyError:
        raise ValueError(f'unknown primitive kind {kind}')


def jvpRule(kind: str) -> Callable:
    rule = getRule(kind)
    if rule.jvp is None:
        raise MissingRuleError(f'jvp: no rule for primitive {kind}')
    return rule.jvp


def vjpRule(kind: str) -> Callable:
    rule = getRule(kind)
    if rule.vjp is None:
        raise MissingRuleError(f'vjp: no rule for primitive {kind}')
    return rule.vjp


class Graph:
    """
    An immutable program over dense tensors

    Args:
        nodes (Sequence[Node]): nodes in topological order;
            the ``input`` nodes must come first
        output (Optional[int]): the output node, the last node
            by default

    Attributes:
        nodes (tuple[Node, ...]): the nodes
        numInputs (int): count of root (input) nodes
        output (Optional[int]): the output node index

    """

    def __init__(self, nodes: Sequence[Node],
                 output: Optional[int] = None) -> None:
        self.nodes: tuple = tuple(Node(n[0], tuple(n[1])) for n in nodes)
        self.numInputs: int = sum(
            1 for n in self.nodes if n.prim.kind == 'input')

        if output is None and self.nodes:
            output = len(self.nodes) - 1
        self.output: Optional[int] = output

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def inputShapes(self) -> list:
        return [tuple(n.prim.attrs['shape']) for n in self.nodes
                if n.prim.kind == 'input']

    def _checkStructure(self, op: str) -> None:
        if self.output is None or not self.nodes:
            raise ValueError(f'{op}: no output')

        if not 0 <= self.output < len(self.nodes):
            raise ValueError(f'{op}: output {self.output} is not a node')

        seenOther = False
        for k, (prim, parents) in enumerate(self.nodes):
            rule = getRule(prim.kind)

            if prim.kind == 'input':
                if seenOther:
                    raise ValueError(
                        f'{op}: node {k}: inputs must precede other nodes')
            else:
                seenOther = True

            if rule.arity is not None and len(parents) != rule.arity:
                raise ValueError(
                    f'{op}: node {k} ({prim}): expected {rule.arity} '
                    f'parents, got {len(parents)}')

            for p in parents:
                if not 0 <= p < len(self.nodes):
                    raise ValueError(
                        f'{op}: node {k}: dangling parent {p}')
                if p >= k:
                    raise ValueError(
                        f'{op}: node {k}: parent {p} violates '
                        'topological order')

    def shapes(self) -> list:
        """
        Infer the shape of every node

        Raises:
            ShapeError: naming the first node whose parents do not conform

        """

        shapes: list = []
        for k, (prim, parents) in enumerate(self.nodes):
            try:
                shapes.append(getRule(prim.kind).shape(
                    prim.attrs, [shapes[p] for p in parents]))
            except ShapeError as e:
                raise ShapeError(f'shape: node {k} ({prim}): {e}')
        return shapes

    def validate(self) -> None:
        """
        Check topological order, a single output and shape consistency.
        The graph is not modified.

        Raises:
            ValueError: on structural problems
            ShapeError: on shape inconsistency

        """

        self._checkStructure('validate')
        self.shapes()

    @property
    def outputShape(self) -> Shape:
        return self.shapes()[self.output]

    def trace(self, inputs: Sequence[Any]) -> list:
        """
        Evaluate every node once, in order

        Args:
            inputs (Sequence[Any]): one value per input node

        Returns:
            list[Tensor]: the value s_k of every node

        Raises:
            ValueError: wrong number of inputs
            ShapeError: a node's operands do not conform
            NumericError: a node produced a non-finite value

        """

        self._checkStructure('eval')

        if len(inputs) != self.numInputs:
            raise ValueError(
                f'eval: expected {self.numInputs} inputs, '
                f'got {len(inputs)}')

        values: list = []
        for k, (prim, parents) in enumerate(self.nodes):
            rule = RULES[prim.kind]

            if prim.kind == 'input':
                value = asTensor(inputs[k])
                expected = tuple(prim.attrs['shape'])
                if value.shape != expected:
                    raise ShapeError(
                        f'eval: node {k} (input): expected shape '
                        f'{expected}, got {value.shape}')
            else:
                args = [values[p] for p in parents]
                try:
                    rule.shape(prim.attrs, [a.shape for a in args])
                except ShapeError as e:
                    raise ShapeError(f'eval: node {k} ({prim}): {e}')

                with np.errstate(all='ignore'):
                    value = asTensor(rule.apply(prim.attrs, args))

            if not np.all(np.isfinite(value)):
                raise NumericError(
                    f'eval: node {k} ({prim}): non-finite value', k)

            values.append(value)

        return values

    def eval(self, inputs: Sequence[Any]) -> Tensor:
        """
        Evaluate the program and return the output value s_K

        """

        return self.trace(inputs)[self.output]

    def __call__(self, *inputs: Any) -> Tensor:
        return self.eval(list(inputs))

    def serialize(self) -> str:
        """
        Line-oriented text form, one node per line:
        ``id kind key=value... parents...``

        """

        out = 'none' if self.output is None else str(self.output)
        lines = [f'graph inputs={self.numInputs} output={out}']

        for k, (prim, parents) in enumerate(self.nodes):
            toks = [str(k), prim.kind]
            for key, value in prim.attrs.items():
                toks.append(f'{key}={_dumpAttr(value)}')
            toks.extend(str(p) for p in parents)
            lines.append(' '.join(toks))

        return '\n'.join(lines) + '\n'

    @staticmethod
    def deserialize(text: str) -> Graph:
        return parseGraph(text)


def _dumpAttr(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, np.ndarray):
        value = value.tolist()
    elif isinstance(value, tuple):
        value = list(value)
    return json.dumps(value, separators=(',', ':'))


def _loadAttr(key: str, raw: str) -> Any:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        return raw

    if key == 'value':
        return asTensor(value)
    if key == 'shape':
        return tuple(value)
    return value


def _tokens(line: str) -> list:
    """
    Split a line by whitespace, keeping 1-based columns

    """

    toks = []
    col = 0
    for tok in line.split():
        col = line.index(tok, col)
        toks.append((tok, col + 1))
        col += len(tok)
    return toks


def parseGraph(text: str) -> Graph:
    """
    Read a graph from its text form

    Args:
        text (str): graph text; ``#`` starts a comment

    Returns:
        Graph: the graph (not validated)

    Raises:
        GraphParseError: with the line and column of the bad token

    """

    header = None
    nodes: list = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0]
        toks = _tokens(line)
        if not toks:
            continue

        if header is None:
            header = _parseHeader(toks, lineno)
            continue

        nodes.append(_parseNode(toks, lineno, len(nodes)))

    if header is None:
        raise GraphParseError('parse: missing "graph" header', 1)

    numInputs, output, hdrLine = header
    graph = Graph(nodes, output)

    if graph.numInputs != numInputs:
        raise GraphParseError(
            f'parse: header declares {numInputs} inputs, '
            f'found {graph.numInputs}', hdrLine)

    if output is not None and output >= len(nodes):
        raise GraphParseError(
            f'parse: output {output} is not a node', hdrLine)

    return graph


def _parseHeader(toks: list, lineno: int) -> tuple:
    tok, col = toks[0]
    if tok != 'graph':
        raise GraphParseError(
            f'parse: expected "graph" header, found "{tok}"', lineno, col)

    fields = {}
    for tok, col in toks[1:]:
        key, sep, value = tok.partition('=')
        if not sep or key not in ('inputs', 'output'):
            raise GraphParseError(
                f'parse: bad header field "{tok}"', lineno, col)
        if key == 'output' and value == 'none':
            fields[key] = None
        elif value.isdigit():
            fields[key] = int(value)
        else:
            raise GraphParseError(
                f'parse: {key} must be a non-negative integer', lineno, col)

    if 'inputs' not in fields:
        raise GraphParseError('parse: header lacks "inputs"', lineno)

    return fields['inputs'], fields.get('output'), lineno


def _parseNode(toks: list, lineno: int, expectedId: int) -> Node:
    tok, col = toks[0]
    if tok != str(expectedId):
        raise GraphParseError(
            f'parse: expected node id {expectedId}, found "{tok}"',
            lineno, col)

    if len(toks) < 2:
        raise GraphParseError('parse: missing primitive kind', lineno)

    kind, col = toks[1]
    if kind not in RULES:
        raise GraphParseError(
            f'parse: unknown primitive "{kind}"', lineno, col)

    attrs: dict = {}
    parents: list = []
    for tok, col in toks[2:]:
        key, sep, value = tok.partition('=')
        if sep:
            if parents:
                raise GraphParseError(
                    'parse: attributes must precede parents', lineno, col)
            attrs[key] = _loadAttr(key, value)
        elif tok.isdigit():
            parents.append(int(tok))
        else:
            raise GraphParseError(
                f'parse: bad parent index "{tok}"', lineno, col)

    if kind == 'input' and 'shape' not in attrs:
        raise GraphParseError('parse: input needs shape=', lineno)
    if kind == 'constant' and 'value' not in attrs:
        raise GraphParseError('parse: constant needs value=', lineno)

    return Node(Primitive(kind, attrs), tuple(parents))


class GraphBuilder(Ops):
    """
    Builds a graph node by node. Values are node indices.

    Example:
        >>> b = GraphBuilder()
        >>> x = b.input(())
        >>> g = b.build(b.elementwise('exp', x))

    """

    def __init__(self) -> None:
        self.nodes: list = []
        self._shapes: list = []

    def shape(self, x: int) -> Shape:
        return self._shapes[x]

    def _append(self, prim: Primitive, parents: Sequence[int]) -> int:
        rule = getRule(prim.kind)
        shape = rule.shape(prim.attrs, [self._shapes[p] for p in parents])
        self.nodes.append(Node(prim, tuple(parents)))
        self._shapes.append(tuple(shape))
        return len(self.nodes) - 1

    def input(self, shape: Sequence[int]) -> int:
        if any(n.prim.kind != 'input' for n in self.nodes):
            raise ValueError('builder: inputs must precede other nodes')
        return self._append(Primitive('input', {'shape': tuple(shape)}), [])

    def constant(self, value: Any) -> int:
        value = np.array(value, dtype=np.float64)
        value.setflags(write=False)
        return self._append(Primitive('constant', {'value': value}), [])

    def apply(self, kind: str, attrs: dict, xs: Sequence[int]) -> int:
        return self._append(Primitive(kind, dict(attrs)), xs)

    def append(self, prim: Primitive, parents: Sequence[int]) -> int:
        return self._append(prim, parents)

    def build(self, output: Optional[int] = None) -> Graph:
        return Graph(self.nodes, output)


def replayGraph(builder: GraphBuilder, graph: Graph,
                args: Sequence[int]) -> list:
    """
    Copy the nodes of ``graph`` into ``builder``, binding its inputs
    to ``args``

    Returns:
        list[int]: the builder index of every node of ``graph``

    """

    if len(args) != graph.numInputs:
        raise ValueError(
            f'inline: expected {graph.numInputs} arguments, got {len(args)}')

    ids: list = []
    for k, (prim, parents) in enumerate(graph.nodes):
        if prim.kind == 'input':
            ids.append(args[k])
        else:
            ids.append(builder.append(prim, [ids[p] for p in parents]))
    return ids


def inlineGraph(builder: GraphBuilder, graph: Graph,
                args: Sequence[int]) -> int:
    """
    Inline a composite (sub)graph and return the id of its output

    """

    return replayGraph(builder, graph, args)[graph.output]


@dataclass(frozen=True)
class LinearMap:
    """
    A matrix-free linear operator

    Attributes:
        inShape (tuple): shape of the directions it accepts
        outShape (tuple): shape of its results
        applyFn: v -> A v
        adjointFn: u -> A* u

    """

    inShape: Shape
    outShape: Shape
    applyFn: Callable[[Tensor], Tensor]
    adjointFn: Callable[[Tensor], Tensor]

    def apply(self, v: Any) -> Tensor:
        v = asTensor(v)
        if v.shape != tuple(self.inShape):
            raise ShapeError(
                f'apply: expected shape {tuple(self.inShape)}, got {v.shape}')
        return asTensor(self.applyFn(v)).reshape(self.outShape)

    def adjointApply(self, u: Any) -> Tensor:
        u = asTensor(u)
        if u.shape != tuple(self.outShape):
            raise ShapeError(
                f'adjoint: expected shape {tuple(self.outShape)}, '
                f'got {u.shape}')
        return asTensor(self.adjointFn(u)).reshape(self.inShape)

    __call__ = apply

    @property
    def adjoint(self) -> LinearMap:
        return LinearMap(self.outShape, self.inShape,
                         self.adjointFn, self.applyFn)

    @staticmethod
    def fromMatrix(a: Any) -> LinearMap:
        a = asTensor(a)
        return LinearMap((a.shape[1],), (a.shape[0],),
                         lambda v: a @ v, lambda u: a.T @ u)

    def toMatrix(self) -> Tensor:
        """
        Materialize as a (out size) x (in size) matrix,
        one column per unit direction

        """

        n = int(np.prod(self.inShape))
        cols = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            cols.append(self.apply(e.reshape(self.inShape)).ravel())
        return np.stack(cols, axis=1) if cols else np.zeros((0, 0))


def primitiveLinearMap(prim: Primitive, xs: Sequence[Any],
                       argnum: int) -> LinearMap:
    """
    The local linear map of a primitive in its ``argnum``-th argument

    """

    xs = [asTensor(x) for x in xs]
    rule = getRule(prim.kind)
    out = asTensor(rule.apply(prim.attrs, xs))
    jvpFn = jvpRule(prim.kind)
    vjpFn = vjpRule(prim.kind)

    def applyFn(v: Tensor) -> Tensor:
        ts = [None] * len(xs)
        ts[argnum] = v
        t = jvpFn(NUMERIC, prim.attrs, xs, out, ts)
        return np.zeros(out.shape) if t is None else t

    def adjointFn(u: Tensor) -> Tensor:
        g = vjpFn(NUMERIC, prim.attrs, xs, out, u)[argnum]
        return np.zeros(xs[argnum].shape) if g is None else g

    return LinearMap(xs[argnum].shape, out.shape, applyFn, adjointFn)
