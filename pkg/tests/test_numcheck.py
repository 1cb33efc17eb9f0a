import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.graph import LinearMap
from src.numcheck import FDScheme, checkAdjoint, complexStep
from src.numcheck import directionalDerivative, fdCoefficients, gradcheck


class CoefficientsTestCase(unittest.TestCase):
    def test_known_stencils(self):
        self.assertEqual(fdCoefficients('forward', 1, 1), [-1.0, 1.0])
        self.assertEqual(fdCoefficients('backward', 1, 1), [-1.0, 1.0])
        self.assertEqual(fdCoefficients('central', 1, 1), [-0.5, 0.0, 0.5])
        self.assertEqual(fdCoefficients('central', 1, 2), [1.0, -2.0, 1.0])
        self.assertEqual(fdCoefficients('forward', 2, 1), [-1.5, 2.0, -0.5])

    def test_wide_stencils_are_exact(self):
        self.assertEqual(fdCoefficients('central', 2, 1),
                         [1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])
        self.assertEqual(fdCoefficients('forward', 6, 1),
                         [-49 / 20, 6.0, -15 / 2, 20 / 3, -15 / 4, 6 / 5,
                          -1 / 6])
        self.assertEqual(fdCoefficients('central', 2, 4),
                         [1.0, -4.0, 6.0, -4.0, 1.0])

    def test_weights_sum_to_zero(self):
        for kind in ('forward', 'backward', 'central'):
            for p in (1, 2, 3):
                with self.subTest(kind=kind, p=p):
                    self.assertAlmostEqual(sum(fdCoefficients(kind, p, 1)),
                                           0.0, places=12)

    def test_order_too_high(self):
        with self.assertRaises(ValueError):
            fdCoefficients('forward', 1, 2)

    def test_scheme_validation(self):
        with self.assertRaises(ValueError):
            FDScheme('sideways')
        with self.assertRaises(ValueError):
            FDScheme(delta=0.0)
        with self.assertRaises(ValueError):
            FDScheme(accuracy=0)


class DirectionalTestCase(unittest.TestCase):
    def test_central_accuracy(self):
        d = directionalDerivative(np.sin, 0.3, 1.0)
        self.assertAlmostEqual(d, np.cos(0.3), places=9)

    def test_forward_accuracy(self):
        d = directionalDerivative(np.sin, 0.3, 1.0, FDScheme('forward'))
        self.assertAlmostEqual(d, np.cos(0.3), places=4)

    def test_second_derivative(self):
        scheme = FDScheme('central', delta=1e-3, derivative=2)
        d = directionalDerivative(np.exp, 0.5, 1.0, scheme)
        self.assertAlmostEqual(d, np.exp(0.5), places=5)

    def test_central_error_is_quadratic(self):
        errs = []
        for delta in (1e-2, 5e-3):
            d = directionalDerivative(np.exp, 0.0, 1.0,
                                      FDScheme('central', delta=delta))
            errs.append(abs(d - 1.0))
        self.assertGreater(errs[0] / errs[1], 3.5)
        self.assertLess(errs[0] / errs[1], 4.5)

    def test_vector_direction(self):
        def f(w):
            return float(w[0] ** 2 + 3.0 * w[1])

        d = directionalDerivative(f, np.array([1.0, 2.0]),
                                  np.array([1.0, -1.0]))
        self.assertAlmostEqual(d, 2.0 - 3.0, places=8)


class ComplexStepTestCase(unittest.TestCase):
    def test_exact_to_roundoff(self):
        d = complexStep(np.exp, 0.7, 1.0)
        self.assertAlmostEqual(d / np.exp(0.7), 1.0, places=14)

    def test_real_only_function(self):
        with self.assertRaises(TypeError):
            complexStep(np.real, 0.7, 1.0)
        with self.assertRaises(TypeError):
            complexStep(lambda z: 1.0, 0.7, 1.0)


class GradcheckTestCase(unittest.TestCase):
    def test_passes_on_correct_gradient(self):
        w = np.array([0.3, -1.2, 2.0])
        report = gradcheck(lambda w: float(np.sum(np.sin(w))), np.cos, w)
        self.assertTrue(report.passed)
        self.assertEqual(len(report.rows), 3)
        self.assertIn('PASS', report.format())

    def test_names_worst_coordinate(self):
        def wrong(w):
            g = np.cos(w)
            g[1] += 0.5
            return g

        w = np.array([0.3, -1.2, 2.0])
        report = gradcheck(lambda w: float(np.sum(np.sin(w))), wrong, w)
        self.assertFalse(report.passed)
        self.assertEqual(report.worstIndex, 1)
        self.assertIn('FAIL', report.format())

    def test_zero_tolerance_fails(self):
        report = gradcheck(lambda w: float(w @ w), lambda w: 2.0 * w,
                           np.array([1.0, 2.0]), tol=0.0)
        self.assertFalse(report.passed)


class AdjointTestCase(unittest.TestCase):
    def test_matrix_is_adjoint(self):
        a = np.random.default_rng(0).standard_normal((3, 5))
        self.assertLess(checkAdjoint(LinearMap.fromMatrix(a)), 1e-13)

    def test_detects_wrong_adjoint(self):
        a = np.random.default_rng(0).standard_normal((3, 3))
        op = LinearMap((3,), (3,), lambda v: a @ v, lambda u: a @ u)
        self.assertGreater(checkAdjoint(op), 1e-3)

    def test_adjoint_property(self):
        a = np.arange(6.0).reshape(3, 2)
        op = LinearMap.fromMatrix(a).adjoint
        assert_allclose(op.apply(np.ones(3)), a.T @ np.ones(3))


if __name__ == '__main__':
    unittest.main()
