import dataclasses
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from scipy.optimize import brentq

from src.autodiff import backpropFeedforward
from src.errors import ConvergenceError
from src.fixtures import mlpSpec
from src.graph import GraphBuilder, LinearMap
from src.implicit import RootProblem, adjointStateGradient, danskinGradient
from src.implicit import feedforwardConstraints, iftJvp, iftVjp
from src.implicit import inverseFnJvp, solveLinearGeneral
from src.numcheck import checkAdjoint


def circleProblem() -> RootProblem:
    # F(x, y) = x² + y² - 1 on the upper branch
    b = GraphBuilder()
    x, y = b.input((1,)), b.input((1,))
    total = b.add(b.elementwise('square', x), b.elementwise('square', y))
    graph = b.build(b.sub(total, b.constant(np.ones(1))))
    return RootProblem.fromGraph(graph, lambda y: np.sqrt(1.0 - y * y))


def quinticRoot(lam):
    lam = float(np.ravel(lam)[0])
    w = brentq(lambda w: w ** 5 + w ** 3 + w - lam, -10.0, 10.0,
               xtol=1e-15)
    return np.array([w])


def quinticProblem() -> RootProblem:
    # F(w, λ) = w⁵ + w³ + w - λ
    b = GraphBuilder()
    w, lam = b.input((1,)), b.input((1,))
    w2 = b.elementwise('square', w)
    w3 = b.mul(w2, w)
    poly = b.add(b.add(b.mul(w3, w2), w3), w)
    return RootProblem.fromGraph(b.build(b.sub(poly, lam)), quinticRoot)


class RootTestCase(unittest.TestCase):
    def test_circle(self):
        problem = circleProblem()
        y = np.array([0.6])
        assert_allclose(iftJvp(problem, y, np.ones(1)), [-0.75], atol=1e-8)
        assert_allclose(iftVjp(problem, y, np.ones(1)), [-0.75], atol=1e-8)

    def test_quintic(self):
        problem = quinticProblem()
        lam = np.array([3.0])
        assert_allclose(problem.solver(lam), [1.0], atol=1e-12)
        assert_allclose(iftJvp(problem, lam, np.ones(1)), [1.0 / 9.0],
                        atol=1e-8)

    def test_quintic_matches_differences(self):
        problem = quinticProblem()
        for lam in (-2.0, 0.5, 7.0):
            h = 1e-5
            fd = (quinticRoot([lam + h]) - quinticRoot([lam - h])) / (2 * h)
            with self.subTest(lam=lam):
                assert_allclose(iftVjp(problem, np.array([lam]), np.ones(1)),
                                fd, rtol=1e-6)

    def test_graph_arity(self):
        b = GraphBuilder()
        x = b.input((1,))
        with self.assertRaises(ValueError):
            RootProblem.fromGraph(b.build(b.elementwise('sin', x)),
                                  lambda lam: lam)


class SolveTestCase(unittest.TestCase):
    def test_general_matrix(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4)) + 4.0 * np.eye(4)
        b = rng.standard_normal(4)
        assert_allclose(solveLinearGeneral(a, b), np.linalg.solve(a, b),
                        rtol=1e-8)

    def test_symmetric_matrix(self):
        a = np.array([[4.0, 1.0], [1.0, 3.0]])
        b = np.array([1.0, 2.0])
        x = solveLinearGeneral(LinearMap.fromMatrix(a), b, symmetric=True)
        assert_allclose(x, np.linalg.solve(a, b), rtol=1e-9)

    def test_zero_rhs(self):
        assert_array_equal(solveLinearGeneral(np.eye(3), np.zeros(3)),
                           np.zeros(3))

    def test_singular(self):
        with self.assertRaises(ConvergenceError) as cm:
            solveLinearGeneral(np.diag([1.0, 0.0]), np.array([0.0, 1.0]))
        self.assertGreater(cm.exception.residual, 0.5)


class AdjointStateTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.spec = mlpSpec(0)
        self.problem = feedforwardConstraints(self.spec, lambda s: s)
        self.w = np.concatenate([np.ravel(p) for p in self.spec.params])
        _, grads = backpropFeedforward(self.spec, self.spec.forward()[-1])
        self.expected = np.concatenate([np.ravel(g) for g in grads])

    def test_backsubstitution_is_backprop(self):
        g = adjointStateGradient(self.problem, self.w)
        assert_array_equal(g, self.expected)

    def test_general_solve(self):
        problem = dataclasses.replace(self.problem, adjointSolve=None)
        assert_allclose(adjointStateGradient(problem, self.w), self.expected,
                        rtol=1e-7, atol=1e-10)

    def test_constraint_jacobians(self):
        s = self.problem.stateSolver(self.w)
        self.assertLess(checkAdjoint(self.problem.jac1c(s, self.w)), 1e-12)
        self.assertLess(checkAdjoint(self.problem.jac2c(s, self.w)), 1e-12)

    def test_state_satisfies_constraints(self):
        s = self.problem.stateSolver(self.w)
        states = self.spec.forward()
        assert_array_equal(s, np.concatenate([np.ravel(x)
                                              for x in states[1:]]))


class DanskinTestCase(unittest.TestCase):
    def test_gradient_of_max(self):
        # h(λ) = max_w λw - w²/2 = λ²/2, attained at w = λ
        g = danskinGradient(lambda lam: lam, lambda w, lam: w,
                            np.array([1.5, -0.5]))
        assert_allclose(g, [1.5, -0.5])


class InverseTestCase(unittest.TestCase):
    def test_inverse_function(self):
        b = GraphBuilder()
        w = b.input((2,))
        f = b.build(b.add(b.mul(b.elementwise('square', w), w), w))
        w0 = np.array([0.5, -1.0])
        omega = f.eval([w0])
        out = inverseFnJvp(f, lambda om: w0, omega, np.ones(2))
        assert_allclose(out, 1.0 / (3.0 * w0 ** 2 + 1.0), rtol=1e-8)


if __name__ == '__main__':
    unittest.main()
