from __future__ import annotations
from abc import abstractmethod
from dataclasses import replace
from typing import Any, Callable
import io
import logging

import numpy as np

from .autodiff import gradient, jvp
from .chainmodels import dumpMarginalsCsv, forwardBackward, loadThetaCsv
from .checkpoint import STRATEGIES, treeversePlan
from .clparser import CmdIR
from .errors import CheckFailedError
from .estimators import makeRng
from .fixtures import ESTIMATOR_FIXTURES, ODE_FIXTURES, OPT_PROBLEMS, \
    optProblem
from .graph import Graph
from .numcheck import GradcheckReport, gradcheck
from .ode import adjointGradient, unrolledGradient
from .optim import STEPS, dumpTraceCsv, minimize

logger = logging.getLogger(__name__)

# Newton-type steps are taken at unit length or searched for
STEP_OVERRIDES: dict[str, dict[str, Any]] = {
    'newton': {'stepsize': 1.0},
    'lbfgs': {'linesearch': 'armijo'},
}


class CmdExecutor(object):
    """
    An abstract class for a command execution

    Args:
        cmd (CmdIR): the command which need to be executed
        seed (int): the session seed, used when the command has no
            `--seed` of its own

    Attributes:
        name (str): the command name
        keys (dict[str, str]): the command keys

    Raises:
        SyntaxError: on invalid flag values

        CheckFailedError: for `gradcheck` only, if a check did not pass

    """

    def __init__(self, cmd: CmdIR, seed: int = 0) -> None:
        self.cmd = cmd
        self.name = cmd.name
        self.keys = cmd.keys
        self.seed = seed

    @abstractmethod
    def execute(self) -> io.StringIO:
        """
        Execute the command

        Returns:
            io.StringIO: output stream with the result of execution

        """

        pass

    def _seed(self) -> int:
        if self.keys.get('seed', ''):
            return self.cmd.intKey('seed')
        return self.seed


class GradcheckExecutor(CmdExecutor):
    """
    `gradcheck`: compare the reverse- and forward-mode gradients of a
    scalar graph with central differences, for every input, at a seeded
    point with coordinates in [0.1, 1)

    """

    def execute(self) -> io.StringIO:
        tol = self.cmd.floatKey('tol')
        with open(self.keys['graph'], 'r') as f:
            graph = Graph.deserialize(f.read())

        if graph.outputShape != ():
            raise SyntaxError(
                f'gradcheck: the graph output must be a scalar, '
                f'got shape {graph.outputShape}')

        rng = makeRng(self._seed())
        point = [rng.uniform(0.1, 1.0, size=shape)
                 for shape in graph.inputShapes]

        ostream = io.StringIO()
        failures: list[str] = []
        for argnum in range(graph.numInputs):
            f = self._restricted(graph, point, argnum)
            paths = {
                'reverse': lambda w, a=argnum: gradient(
                    graph, self._replace(point, a, w), a),
                'forward': lambda w, a=argnum: self._forwardGradient(
                    graph, self._replace(point, a, w), a),
            }
            for path, gradF in paths.items():
                report: GradcheckReport = gradcheck(f, gradF, point[argnum],
                                                    tol)
                ostream.write(f'{path} input {argnum}\n')
                ostream.write(report.format() + '\n')
                if not report.passed:
                    failures.append(
                        f'{path} input {argnum}: max error '
                        f'{report.maxError:.3e} at index '
                        f'{report.worstIndex} (tol {tol:g})')

        if failures:
            raise CheckFailedError('gradcheck: ' + '; '.join(failures),
                                   ostream.getvalue())

        return ostream

    @staticmethod
    def _replace(point: list, argnum: int, w: Any) -> list:
        inputs = list(point)
        inputs[argnum] = w
        return inputs

    @classmethod
    def _restricted(cls, graph: Graph, point: list,
                    argnum: int) -> Callable:
        return lambda w: float(graph.eval(cls._replace(point, argnum, w)))

    @staticmethod
    def _forwardGradient(graph: Graph, inputs: list, argnum: int) -> Any:
        w = np.asarray(inputs[argnum], dtype=np.float64)
        g = np.empty(w.size)
        for i in range(w.size):
            e = np.zeros(w.size)
            e[i] = 1.0
            directions: list = [None] * graph.numInputs
            directions[argnum] = e.reshape(w.shape)
            g[i] = float(jvp(graph, inputs, directions))
        return g.reshape(w.shape)


class ScheduleExecutor(CmdExecutor):
    """
    `schedule`: the optimal checkpointing table for K steps and S slots,
    then the plan itself

    """

    def execute(self) -> io.StringIO:
        K = self.cmd.intKey('K', minimum=1)
        S = self.cmd.intKey('S', minimum=1)
        table, schedule = treeversePlan(K, S)

        ostream = io.StringIO()
        ostream.write(table.toCsv() + '\n')
        ostream.write(f'cost {int(table.cost[K, S])}\n')
        ostream.write(str(schedule) + '\n')
        return ostream


class EstimateExecutor(CmdExecutor):
    """
    `estimate`: run a bundled Monte-Carlo estimator

    """

    def execute(self) -> io.StringIO:
        tag = self.keys['estimator']
        if tag not in ESTIMATOR_FIXTURES:
            raise SyntaxError(
                f'estimate: unknown estimator {tag}, '
                f'choose from {", ".join(ESTIMATOR_FIXTURES)}')
        n = self.cmd.intKey('n', minimum=1)
        seed = self._seed()

        report = ESTIMATOR_FIXTURES[tag](n, seed)
        dim = np.size(report.estimate)
        header = ['estimate'] if dim == 1 \
            else [f'estimate{i}' for i in range(dim)]

        ostream = io.StringIO()
        ostream.write(','.join(header + ['n', 'variance', 'seed']) + '\n')
        ostream.write(report.toCsvRow() + '\n')
        return ostream


class OptimizeExecutor(CmdExecutor):
    """
    `optimize`: run an optimizer on a bundled problem and print the trace

    """

    def execute(self) -> io.StringIO:
        algo = self.keys['algo']
        if algo not in STEPS:
            raise SyntaxError(
                f'optimize: unknown algorithm {algo}, '
                f'choose from {", ".join(STEPS)}')
        if self.keys['problem'] not in OPT_PROBLEMS:
            raise SyntaxError(
                f'optimize: unknown problem {self.keys["problem"]}, '
                f'choose from {", ".join(OPT_PROBLEMS)}')
        iters = self.cmd.intKey('iters')

        problem = optProblem(self.keys['problem'])
        stepFn = STEPS[algo]
        config = replace(problem.config, **STEP_OVERRIDES.get(algo, {}))

        def step(state):
            return stepFn(state, problem.oracle, config)

        state, trace = minimize(step, problem.oracle, problem.w0, iters)
        logger.debug('optimize: %s on %s stopped at %s', algo,
                     problem.name, state.w)

        ostream = io.StringIO()
        ostream.write(dumpTraceCsv(trace) + '\n')
        return ostream


class ChainExecutor(CmdExecutor):
    """
    `chain`: per-variable marginals of the chain model read from a
    `k,i,j,value` file

    """

    def execute(self) -> io.StringIO:
        theta = loadThetaCsv(self.keys['theta'])
        posterior = forwardBackward(theta)

        ostream = io.StringIO()
        ostream.write(dumpMarginalsCsv(posterior.unary) + '\n')
        return ostream


class OdeExecutor(CmdExecutor):
    """
    `ode`: gradient of the sum of the final state w.r.t. the initial
    state and the parameters, by the continuous adjoint and by reverse
    mode over the unrolled Euler steps

    """

    METHODS = tuple(STRATEGIES) + ('treeverse',)

    def execute(self) -> io.StringIO:
        name = self.keys['fixture']
        if name not in ODE_FIXTURES:
            raise SyntaxError(
                f'ode: unknown fixture {name}, '
                f'choose from {", ".join(ODE_FIXTURES)}')
        method = self.keys['method']
        if method not in self.METHODS:
            raise SyntaxError(
                f'ode: unknown method {method}, '
                f'choose from {", ".join(self.METHODS)}')
        K = self.cmd.intKey('K', minimum=1)
        slots = self.cmd.intKey('S', minimum=1) \
            if method == 'treeverse' else None

        problem = ODE_FIXTURES[name]()

        def lossGrad(s):
            return np.ones_like(s)

        ax, aw = adjointGradient(problem, lossGrad, K)
        ux, uw = unrolledGradient(problem, lossGrad, K, method, slots)

        columns, values = ['K'], [str(K)]
        for label, g in (('adjoint_grad_x', ax), ('adjoint_grad_w', aw),
                         ('unrolled_grad_x', ux), ('unrolled_grad_w', uw)):
            flat = np.ravel(g)
            if flat.size == 1:
                columns.append(label)
            else:
                columns += [f'{label}{i}' for i in range(flat.size)]
            values += [repr(float(v)) for v in flat]

        ostream = io.StringIO()
        ostream.write(','.join(columns) + '\n')
        ostream.write(','.join(values) + '\n')
        return ostream


EXECUTORS: dict[str, type] = {
    'gradcheck': GradcheckExecutor,
    'schedule': ScheduleExecutor,
    'estimate': EstimateExecutor,
    'optimize': OptimizeExecutor,
    'chain': ChainExecutor,
    'ode': OdeExecutor,
}


def processCmd(cmd: CmdIR, seed: int = 0) -> CmdExecutor:
    """
    Map the command to its executor

    Args:
        cmd (CmdIR): the command
        seed (int): the session seed

    Returns:
        CmdExecutor: the executor for the command

    """

    return EXECUTORS[cmd.name](cmd, seed)


def runCommand(cmd: CmdIR, seed: int = 0) -> io.StringIO:
    """
    Execute the command

    Args:
        cmd (CmdIR): the command
        seed (int): the session seed

    Returns:
        io.StringIO: the output stream with the result of the command

    """

    logger.debug('run: %s (seed %d)', cmd, seed)
    return processCmd(cmd, seed).execute()
