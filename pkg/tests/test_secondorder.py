import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.autodiff import gradient
from src.errors import IndefiniteError, ShapeError
from src.estimators import EstimatorReport, makeRng
from src.fixtures import categoricalModel, quadraticGraph, randomGraph
from src.fixtures import squaredNormLoss
from src.graph import GraphBuilder, inlineGraph
from src.secondorder import HVP_METHODS, GaussNewtonOracle, Layer, cgSolve
from src.secondorder import fisherVpExact, fisherVpSampled, gnDiagBartlett
from src.secondorder import gnDiagExact, hessianDiagChain, hessianMatrix
from src.secondorder import hvp, hvpOperator, ihvp


class HvpTestCase(unittest.TestCase):
    def test_methods_agree(self):
        for seed in range(5):
            graph = randomGraph(seed, dim=3, numInputs=1)
            rng = np.random.default_rng(seed)
            w, v = rng.standard_normal(3), rng.standard_normal(3)
            ref = hvp(graph, w, v, 'fwd_on_rev')
            for method in HVP_METHODS:
                with self.subTest(seed=seed, method=method):
                    assert_allclose(hvp(graph, w, v, method), ref,
                                    rtol=1e-8, atol=1e-10)

    def test_hessian_is_symmetric(self):
        graph = randomGraph(11, dim=4, numInputs=1)
        w = np.random.default_rng(11).standard_normal(4)
        for method in ('fwd_on_rev', 'rev_on_rev'):
            h = hessianMatrix(graph, w, method)
            assert_allclose(h, h.T, atol=1e-9)

    def test_quadratic_hessian(self):
        a = np.array([[2.0, 0.5], [0.5, 1.0]])
        graph = quadraticGraph(a, [1.0, -1.0])
        for method in HVP_METHODS:
            with self.subTest(method=method):
                assert_allclose(hessianMatrix(graph, np.zeros(2), method), a,
                                atol=1e-12)

    def test_unknown_method(self):
        graph = quadraticGraph(np.eye(2), [0.0, 0.0])
        with self.assertRaisesRegex(ValueError, 'unknown method'):
            hvpOperator(graph, np.zeros(2), 'sideways')

    def test_fwd_on_fwd_dimension_cap(self):
        graph = quadraticGraph(np.eye(65), np.zeros(65))
        with self.assertRaisesRegex(ValueError, 'fwd_on_fwd'):
            hvpOperator(graph, np.zeros(65), 'fwd_on_fwd')

    def test_needs_scalar_single_input(self):
        b = GraphBuilder()
        x = b.input((2,))
        graph = b.build(b.elementwise('exp', x))
        with self.assertRaises(ValueError):
            hvpOperator(graph, np.zeros(2))


class CgTestCase(unittest.TestCase):
    def test_spd_within_dimension(self):
        rng = np.random.default_rng(0)
        for P in (2, 8, 16):
            m = rng.standard_normal((P, P))
            a = m @ m.T + P * np.eye(P)
            b = rng.standard_normal(P)
            res = cgSolve(lambda v: a @ v, b, tol=1e-10)
            with self.subTest(P=P):
                self.assertTrue(res.converged)
                self.assertLessEqual(res.iterations, P)
                self.assertLessEqual(np.linalg.norm(a @ res.x - b),
                                     1e-10 * np.linalg.norm(b))

    def test_zero_rhs(self):
        res = cgSolve(lambda v: 2.0 * v, np.zeros(3))
        self.assertTrue(res.converged)
        self.assertEqual(res.iterations, 0)
        assert_allclose(res.x, np.zeros(3))

    def test_indefinite(self):
        with self.assertRaises(IndefiniteError) as cm:
            cgSolve(lambda v: np.array([1.0, -1.0]) * v, np.ones(2))
        self.assertLessEqual(cm.exception.curvature, 0.0)

    def test_iteration_cap(self):
        a = np.diag(np.arange(1.0, 11.0))
        res = cgSolve(lambda v: a @ v, np.ones(10), maxIter=2)
        self.assertFalse(res.converged)
        self.assertEqual(res.iterations, 2)

    def test_ihvp(self):
        a = np.array([[3.0, 1.0], [1.0, 2.0]])
        graph = quadraticGraph(a, [0.0, 0.0])
        u = np.array([1.0, -2.0])
        assert_allclose(ihvp(graph, np.zeros(2), u), np.linalg.solve(a, u),
                        rtol=1e-9)
        assert_allclose(ihvp(graph, np.zeros(2), u, shift=1.0),
                        np.linalg.solve(a + np.eye(2), u), rtol=1e-9)

    def test_ihvp_needs_curvature(self):
        graph = quadraticGraph(np.diag([1.0, -1.0]), [0.0, 0.0])
        with self.assertRaisesRegex(IndefiniteError, 'increase the shift'):
            ihvp(graph, np.zeros(2), np.ones(2))
        with self.assertRaises(ValueError):
            ihvp(graph, np.zeros(2), np.ones(2), shift=-1.0)


class GaussNewtonTestCase(unittest.TestCase):
    def test_linear_map(self):
        a = np.random.default_rng(2).standard_normal((3, 2))
        b = GraphBuilder()
        w = b.input((2,))
        f = b.build(b.matvec(b.constant(a), w))
        oracle = GaussNewtonOracle(f, squaredNormLoss(3), np.ones(2))
        v = np.array([0.3, -0.7])
        assert_allclose(oracle.gnvp(v), a.T @ a @ v, rtol=1e-12)

    def test_shape_mismatch(self):
        b = GraphBuilder()
        w = b.input((2,))
        f = b.build(b.elementwise('tanh', w))
        with self.assertRaises(ShapeError):
            GaussNewtonOracle(f, squaredNormLoss(3), np.ones(2))

    def test_fisher_equals_gauss_newton(self):
        model, w = categoricalModel(0)
        v = np.random.default_rng(3).standard_normal(w.shape)
        assert_allclose(fisherVpExact(model, w, v),
                        model.gnOracle(w).gnvp(v), rtol=1e-10, atol=1e-12)

    def test_sampled_fisher_unbiased(self):
        model, w = categoricalModel(1)
        v = np.random.default_rng(4).standard_normal(w.shape)
        report = fisherVpSampled(model, w, v, 10000, seed=5)
        exact = fisherVpExact(model, w, v)
        err = np.abs(report.estimate - exact)
        self.assertTrue(np.all(err <= 5 * report.stdError + 1e-12))

    def test_bad_sampler(self):
        model, w = categoricalModel(0)
        with self.assertRaisesRegex(ValueError, 'outside'):
            fisherVpSampled(model, w, np.ones(w.shape), 3, seed=0,
                            sampler=lambda p, rng: 7)

    def test_gn_diagonal(self):
        model, w = categoricalModel(2)
        exact = gnDiagExact(model, w)
        gn = model.gnOracle(w).operator().toMatrix()
        assert_allclose(exact.ravel(), np.diag(gn), rtol=1e-10, atol=1e-12)

        report = gnDiagBartlett(model, w, 10000, seed=6)
        err = np.abs(report.estimate - exact)
        self.assertTrue(np.all(err <= 5 * report.stdError + 1e-12))

    def test_nll_gradient_is_minus_score(self):
        model, w = categoricalModel(3, label=1)
        g = gradient(model.nllGraph(), [w])
        assert_allclose(g.ravel(), -model.score(w, 1), rtol=1e-12,
                        atol=1e-14)


class DiagChainTestCase(unittest.TestCase):
    def test_single_layer_is_exact(self):
        rng = np.random.default_rng(7)
        W = rng.standard_normal((2, 3))
        x = rng.standard_normal(3)

        b = GraphBuilder()
        wi = b.input((2, 3))
        s = b.elementwise('tanh', b.matvec(wi, b.constant(x)))
        graph = b.build(inlineGraph(b, squaredNormLoss(2), [s]))

        res = hessianDiagChain([Layer(W, 'tanh')], x, squaredNormLoss(2))
        h = hessianMatrix(graph, W)
        assert_allclose(res.hessDiag[0].ravel(), np.diag(h), rtol=1e-9,
                        atol=1e-12)
        assert_allclose(res.grads[0], gradient(graph, [W]), rtol=1e-12,
                        atol=1e-14)

    def test_identity_layers_gradient(self):
        rng = np.random.default_rng(8)
        layers = [Layer(rng.standard_normal((3, 3))) for _ in range(2)]
        x = rng.standard_normal(3)
        res = hessianDiagChain(layers, x, squaredNormLoss(3))
        m = layers[1].W @ layers[0].W
        assert_allclose(res.inputGrad, m.T @ (m @ x), rtol=1e-12)

    def test_unknown_activation(self):
        with self.assertRaises(ValueError):
            hessianDiagChain([Layer(np.eye(2), 'bogus')], np.ones(2),
                             squaredNormLoss(2))


class DiagonalEstimateTestCase(unittest.TestCase):
    def test_rademacher_directions(self):
        # E[ω ⊙ Hω] = diag(H) for Rademacher ω
        graph = randomGraph(3, dim=3, numInputs=1)
        w = np.random.default_rng(3).standard_normal(3)
        op = hvpOperator(graph, w)
        omegas = makeRng(19).choice([-1.0, 1.0], size=(4000, 3))
        samples = np.array([omega * op.apply(omega) for omega in omegas])
        report = EstimatorReport.fromSamples(samples, 19)
        err = np.abs(report.estimate - np.diag(hessianMatrix(graph, w)))
        self.assertTrue(np.all(err <= 5.0 * report.stdError + 1e-12))


if __name__ == '__main__':
    unittest.main()
