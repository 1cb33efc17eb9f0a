import unittest

import numpy as np
from numpy.testing import assert_allclose
from scipy.special import ndtr

from src.errors import ShapeError
from src.softprog import NORM_KINDS, SoftDict, branchVariance, dictSoftGet
from src.softprog import listSoftGet, listSoftInsert, listSoftSet, softAll
from src.softprog import softAny, softCond, softEq, softGt, softIfelse
from src.softprog import softLt, softNot, softWhile, smoothedGate, tconorm
from src.softprog import tnorm


def explode():
    raise AssertionError('branch should not be evaluated')


class CompareTestCase(unittest.TestCase):
    def test_ties(self):
        for kind in ('logistic', 'gauss'):
            self.assertEqual(float(softGt(kind, 2.0, 2.0)), 0.5)
        for kernel in ('gaussian', 'logistic'):
            self.assertAlmostEqual(float(softEq(kernel, 1.5, 1.5)), 1.0)

    def test_low_temperature_is_hard(self):
        self.assertAlmostEqual(float(softGt('logistic', 1.0, 0.0, 1e-3)),
                               1.0)
        self.assertAlmostEqual(float(softLt('gauss', 1.0, 0.0, 1e-3)), 0.0)
        self.assertAlmostEqual(float(softEq('gaussian', 1.0, 0.0, 1e-2)),
                               0.0)

    def test_lt_mirrors_gt(self):
        assert_allclose(softLt('logistic', [0.0, 1.0], 0.5),
                        1.0 - softGt('logistic', [0.0, 1.0], 0.5))

    def test_bad_arguments(self):
        with self.assertRaisesRegex(ValueError, 'unknown kind'):
            softGt('step', 1.0, 0.0)
        with self.assertRaisesRegex(ValueError, 'unknown kernel'):
            softEq('box', 1.0, 0.0)
        with self.assertRaises(ValueError):
            softGt('logistic', 1.0, 0.0, 0.0)


class LogicTestCase(unittest.TestCase):
    def test_hard_truth_tables(self):
        for kind in NORM_KINDS:
            for a in (0.0, 1.0):
                for b in (0.0, 1.0):
                    with self.subTest(kind=kind, a=a, b=b):
                        self.assertEqual(float(tnorm(kind, a, b)),
                                         float(a and b))
                        self.assertEqual(float(tconorm(kind, a, b)),
                                         float(a or b))

    def test_de_morgan(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(size=50), rng.uniform(size=50)
        for kind in NORM_KINDS:
            with self.subTest(kind=kind):
                assert_allclose(tconorm(kind, a, b),
                                softNot(tnorm(kind, softNot(a), softNot(b))),
                                atol=1e-15)

    def test_quantifiers(self):
        self.assertEqual(softAll('probabilistic', []), 1.0)
        self.assertEqual(softAny('extremum', []), 0.0)
        self.assertAlmostEqual(softAll('probabilistic', [0.5, 0.5]), 0.25)
        self.assertAlmostEqual(softAny('probabilistic', [0.5, 0.5]), 0.75)
        self.assertAlmostEqual(softAll('lukasiewicz', [0.9, 0.8]), 0.7)
        self.assertAlmostEqual(softAny('lukasiewicz', [0.9, 0.8]), 1.0)

    def test_out_of_range(self):
        with self.assertRaisesRegex(ValueError, r'\[0, 1\]'):
            tnorm('extremum', 1.2, 0.5)
        with self.assertRaises(ValueError):
            softNot(-0.1)
        with self.assertRaisesRegex(ValueError, 'unknown kind'):
            softAll('drastic', [0.5])


class BranchTestCase(unittest.TestCase):
    def test_ifelse_mixes(self):
        out = softIfelse(0.25, [4.0, 0.0], [0.0, 8.0])
        assert_allclose(out, [1.0, 6.0])

    def test_hard_ifelse_skips_branch(self):
        assert_allclose(softIfelse(1.0, lambda: 3.0, explode), 3.0)
        assert_allclose(softIfelse(0.0, explode, lambda: 2.0), 2.0)

    def test_ifelse_shapes(self):
        with self.assertRaises(ShapeError):
            softIfelse(0.5, [1.0, 2.0], [1.0])

    def test_branch_variance(self):
        assert_allclose(branchVariance(0.5, 2.0, 0.0), 1.0)
        assert_allclose(branchVariance(1.0, 2.0, 0.0), 0.0)

    def test_cond(self):
        out = softCond([0.5, 0.0, 0.5], [1.0, explode, 3.0])
        assert_allclose(out, 2.0)

    def test_cond_validation(self):
        with self.assertRaisesRegex(ValueError, 'sum to 1'):
            softCond([0.5, 0.4], [1.0, 2.0])
        with self.assertRaises(ShapeError):
            softCond([0.5, 0.5], [1.0, 2.0, 3.0])
        with self.assertRaises(ShapeError):
            softCond([0.5, 0.5], [[1.0], [1.0, 2.0]])


class WhileTestCase(unittest.TestCase):
    def test_geometric_stop(self):
        p, T = 0.3, 5
        out, dist = softWhile(lambda s: s + 1.0, lambda s: p, 0.0, T)
        expected = [p * (1 - p) ** i for i in range(T)] + [(1 - p) ** T]
        assert_allclose(dist.probs, expected, rtol=1e-14)
        self.assertAlmostEqual(dist.mass, 1.0, places=14)
        self.assertEqual(dist.T, T)
        # the state after i steps is i
        self.assertAlmostEqual(float(out), dist.expectedIterations(),
                               places=14)

    def test_hard_stop(self):
        calls = []

        def step(s):
            calls.append(float(s))
            return s + 1.0

        out, dist = softWhile(step, lambda s: float(s >= 2.0), 0.0, 10)
        self.assertEqual(float(out), 2.0)
        self.assertEqual(calls, [0.0, 1.0])
        self.assertEqual(dist.expectedIterations(), 2.0)

    def test_zero_cap(self):
        out, dist = softWhile(explode, lambda s: 0.0, 7.0, 0)
        self.assertEqual(float(out), 7.0)
        assert_allclose(dist.probs, [1.0])

    def test_negative_cap(self):
        with self.assertRaises(ValueError):
            softWhile(lambda s: s, lambda s: 0.5, 0.0, -1)


class ListTestCase(unittest.TestCase):
    items = [[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]

    def test_get(self):
        assert_allclose(listSoftGet(self.items, [0.0, 1.0, 0.0]), [0.0, 1.0])
        assert_allclose(listSoftGet(self.items, [0.5, 0.5, 0.0]), [0.5, 0.5])
        assert_allclose(listSoftGet(self.items, [0.25, 0.25, 0.5]),
                        [1.25, 1.25])

    def test_get_wrong_length(self):
        with self.assertRaises(ShapeError):
            listSoftGet(self.items, [0.5, 0.5])

    def test_set(self):
        out = listSoftSet(self.items, [0.0, 0.5, 0.5], [4.0, 4.0])
        assert_allclose(out, [[1.0, 0.0], [2.0, 2.5], [3.0, 3.0]])
        with self.assertRaises(ShapeError):
            listSoftSet(self.items, [1.0, 0.0, 0.0], [1.0])

    def test_hard_insert(self):
        for j in range(4):
            pi = np.eye(4)[j]
            out = listSoftInsert(self.items, pi, [9.0, 9.0])
            expected = list(self.items)
            expected.insert(j, [9.0, 9.0])
            with self.subTest(j=j):
                assert_allclose(out, expected)

    def test_soft_insert(self):
        out = listSoftInsert([1.0], [0.25, 0.75], 5.0)
        assert_allclose(out, [0.25 * 5.0 + 0.75, 0.75 * 5.0 + 0.25])

    def test_empty_list(self):
        with self.assertRaises(ShapeError):
            listSoftGet([], [])


class DictTestCase(unittest.TestCase):
    def test_narrow_kernel_is_lookup(self):
        d = SoftDict([[0.0], [1.0], [3.0]], [10.0, 20.0, 30.0], sigma=0.05)
        self.assertAlmostEqual(float(dictSoftGet(d, [1.1])), 20.0)

    def test_equidistant_keys(self):
        d = SoftDict([0.0, 2.0], [[1.0, 0.0], [0.0, 1.0]])
        assert_allclose(dictSoftGet(d, 1.0), [0.5, 0.5])
        assert_allclose(d.weights(1.0), [0.5, 0.5])

    def test_validation(self):
        with self.assertRaises(ValueError):
            SoftDict(np.zeros((0, 1)), np.zeros(0))
        with self.assertRaises(ShapeError):
            SoftDict([0.0, 1.0], [1.0])
        with self.assertRaises(ShapeError):
            dictSoftGet(SoftDict([[0.0, 0.0]], [1.0]), [0.0])


class GateTestCase(unittest.TestCase):
    def test_global_gauss(self):
        x = np.array([-2.0, 0.0, 0.9, 3.0])
        out = smoothedGate(x, sigma=0.5, mode='global', kind='gauss')
        assert_allclose(out, ndtr((1.0 - x) / 0.5) - ndtr((-1.0 - x) / 0.5),
                        rtol=1e-12)

    def test_low_temperature(self):
        x = np.array([-2.0, 0.0, 2.0])
        for mode in ('local', 'global'):
            with self.subTest(mode=mode):
                assert_allclose(smoothedGate(x, sigma=1e-3, mode=mode,
                                             y=5.0, z=-1.0),
                                [-1.0, 5.0, -1.0], atol=1e-9)

    def test_unknown_mode(self):
        with self.assertRaises(ValueError):
            smoothedGate(0.0, mode='sideways')


if __name__ == '__main__':
    unittest.main()
