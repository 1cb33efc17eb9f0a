import unittest

import numpy as np
from numpy.testing import assert_allclose
from scipy import stats
from scipy.special import expit, logsumexp, softmax

from src.estimators import EstimatorReport, NoiseModel, Transform
from src.estimators import categoricalLogpGrad, categoricalSampler
from src.estimators import esGradient, exponentialQuantile, gumbelSample
from src.estimators import gaussianQuantile, gumbelSoftargmax
from src.estimators import inverseTransformSample
from src.estimators import locationScale, perturbedArgmaxExpectation
from src.estimators import perturbedGt, perturbedMaxExpectation
from src.estimators import reparamGradient, sfeGradient, splitRngs
from src.estimators import steinGradient, uniformQuantile
from src.fixtures import CATEGORICAL_THETA, CUBIC_POINT, ESTIMATOR_FIXTURES
from src.numcheck import directionalDerivative

THETA = np.array(CATEGORICAL_THETA)
MU = np.array(CUBIC_POINT)


def categoricalMeanGrad(theta):
    # ∇ E[Y] for Y ~ softargmax(θ) over {0, ..., M-1}
    p = softmax(theta)
    y = np.arange(theta.size)
    return p * (y - np.dot(p, y))


class EstimatorTestCase(unittest.TestCase):
    def assertUnbiased(self, report, exact, k=5.0):
        err = np.abs(np.asarray(report.estimate) - exact)
        bound = k * report.stdError + 1e-12
        self.assertTrue(np.all(err <= bound),
                        f'error {err} above {k} standard errors {bound}')


class ScoreFunctionTestCase(EstimatorTestCase):
    def test_unbiased(self):
        report = sfeGradient(categoricalLogpGrad, categoricalSampler, float,
                             THETA, 10000, seed=0)
        self.assertUnbiased(report, categoricalMeanGrad(THETA))

    def test_running_baseline(self):
        plain = sfeGradient(categoricalLogpGrad, categoricalSampler, float,
                            THETA, 10000, seed=1)
        based = sfeGradient(categoricalLogpGrad, categoricalSampler, float,
                            THETA, 10000, seed=1, baseline='running')
        self.assertUnbiased(based, categoricalMeanGrad(THETA))
        self.assertLess(based.totalVariance, plain.totalVariance)

    def test_constant_baseline(self):
        report = sfeGradient(categoricalLogpGrad, categoricalSampler, float,
                             THETA, 10000, seed=2, baseline=0.4)
        self.assertUnbiased(report, categoricalMeanGrad(THETA))

    def test_perfect_control_variate(self):
        cv = (float, categoricalMeanGrad, 1.0)
        report = sfeGradient(categoricalLogpGrad, categoricalSampler, float,
                             THETA, 200, seed=3, cv=cv)
        assert_allclose(report.estimate, categoricalMeanGrad(THETA),
                        atol=1e-14)
        self.assertLess(report.totalVariance, 1e-20)

    def test_no_samples(self):
        with self.assertRaisesRegex(ValueError, 'positive'):
            sfeGradient(categoricalLogpGrad, categoricalSampler, float,
                        THETA, 0, seed=0)


class PathwiseTestCase(EstimatorTestCase):
    def test_location_scale(self):
        # E[(μ + σZ)²] = μ² + σ², gradient (2μ, 2σ)
        report = reparamGradient(locationScale(), lambda y: 2.0 * y,
                                 NoiseModel('gaussian'), [1.0, 0.5], 10000,
                                 seed=4, noiseShape=(1,))
        self.assertUnbiased(report, [2.0, 1.0])

    def test_lower_variance_than_score(self):
        # the same gradient through the Gaussian score (z/σ, (z²-1)/σ)
        def logpGrad(theta, y):
            z = (y - theta[0]) / theta[1]
            return np.array([z / theta[1], (z * z - 1.0) / theta[1]])

        def sampler(theta, rng):
            return theta[0] + theta[1] * rng.standard_normal()

        theta = np.array([1.0, 0.5])
        score = sfeGradient(logpGrad, sampler, lambda y: y * y, theta,
                            5000, seed=5)
        path = reparamGradient(locationScale(), lambda y: 2.0 * y,
                               NoiseModel('gaussian'), theta, 5000, seed=5,
                               noiseShape=(1,))
        self.assertUnbiased(score, [2.0, 1.0])
        self.assertLess(path.totalVariance, score.totalVariance)

    def test_needs_jacobian(self):
        with self.assertRaisesRegex(ValueError, 'Jacobian'):
            reparamGradient(Transform(lambda z, t: z), lambda y: y,
                            NoiseModel(), [0.0], 10, seed=0)


class PerturbationTestCase(EstimatorTestCase):
    def test_argmax_is_softargmax(self):
        mu = np.array([1.0, 0.0, -0.5])
        report = perturbedArgmaxExpectation(mu, 0.7, 20000, seed=6)
        self.assertUnbiased(report, softmax(mu / 0.7))
        self.assertAlmostEqual(float(np.sum(report.estimate)), 1.0)

    def test_max_is_logsumexp(self):
        mu = np.array([1.0, 0.0])
        report = perturbedMaxExpectation(mu, 1.0, 20000, seed=7)
        self.assertUnbiased(report, logsumexp(mu))

    def test_gt_is_logistic(self):
        report = perturbedGt(1.0, 0.0, 1.0, 20000, seed=8)
        self.assertUnbiased(report, expit(1.0))

    def test_gumbel_distribution(self):
        sample = gumbelSample(5000, seed=9, shifted=False)
        self.assertGreater(stats.kstest(sample, 'gumbel_r').pvalue, 0.01)
        shifted = gumbelSample(5000, seed=9)
        assert_allclose(shifted, sample - np.euler_gamma)

    def test_gumbel_softargmax(self):
        p = gumbelSoftargmax([0.5, 0.1, -1.0], 0.5, seed=10)
        self.assertAlmostEqual(float(p.sum()), 1.0)
        self.assertTrue(np.all(p > 0))

    def test_bad_scale(self):
        with self.assertRaises(ValueError):
            perturbedGt(1.0, 0.0, 0.0, 10, seed=0)


class InverseTransformTestCase(unittest.TestCase):
    def test_exponential(self):
        sample = inverseTransformSample(exponentialQuantile, 2.0, 5000,
                                        seed=11)
        self.assertTrue(np.all(sample >= 0))
        self.assertGreater(
            stats.kstest(sample, 'expon', args=(0, 0.5)).pvalue, 0.01)

    def test_gaussian(self):
        sample = inverseTransformSample(gaussianQuantile, (1.0, 2.0), 5000,
                                        seed=12)
        self.assertGreater(
            stats.kstest(sample, 'norm', args=(1.0, 2.0)).pvalue, 0.01)

    def test_uniform(self):
        sample = inverseTransformSample(uniformQuantile, None, 5000, seed=13)
        self.assertTrue(np.all((sample > 0) & (sample < 1)))
        self.assertGreater(stats.kstest(sample, 'uniform').pvalue, 0.01)


class SmoothingTestCase(EstimatorTestCase):
    # f(w) = Σ w³ smoothed at scale σ has gradient 3μ² + 3σ²
    sigma = 0.1

    def exact(self):
        return 3.0 * MU ** 2 + 3.0 * self.sigma ** 2

    def test_schemes_unbiased(self):
        for scheme in ('vanilla', 'forward_diff', 'central_diff'):
            report = esGradient(lambda w: float(np.sum(w ** 3)), MU,
                                self.sigma, 20000, seed=12, scheme=scheme)
            with self.subTest(scheme=scheme):
                self.assertUnbiased(report, self.exact())

    def test_variance_ordering(self):
        variances = [ESTIMATOR_FIXTURES[tag](10000, 13).totalVariance
                     for tag in ('es-vanilla', 'es-forward', 'es-central')]
        self.assertGreater(variances[0], variances[1])
        self.assertGreater(variances[1], variances[2])

    def test_central_beats_vanilla_across_seeds(self):
        wins = sum(
            ESTIMATOR_FIXTURES['es-central'](2000, seed).totalVariance
            < ESTIMATOR_FIXTURES['es-vanilla'](2000, seed).totalVariance
            for seed in range(100, 110))
        self.assertGreaterEqual(wins, 9)

    def test_variance_decays_like_one_over_n(self):
        small = ESTIMATOR_FIXTURES['es-central'](1000, 14).totalVariance
        large = ESTIMATOR_FIXTURES['es-central'](10000, 15).totalVariance
        self.assertGreater(small / large, 10 ** 0.8)
        self.assertLess(small / large, 10 ** 1.2)

    def test_stein(self):
        # E[<∇f(μ + σZ), Z> Z] = 3μ² + 9σ² for the cubic
        report = steinGradient(lambda w: 3.0 * w ** 2, MU, self.sigma,
                               20000, seed=16)
        self.assertUnbiased(report, 3.0 * MU ** 2 + 9.0 * self.sigma ** 2)
        flat = steinGradient(lambda w: 3.0 * w ** 2, MU, 0.0, 20000,
                             seed=16)
        self.assertUnbiased(flat, 3.0 * MU ** 2)

    def test_validation(self):
        def f(w):
            return 0.0

        with self.assertRaisesRegex(ValueError, 'unknown scheme'):
            esGradient(f, MU, 0.1, 10, seed=0, scheme='backward')
        with self.assertRaises(ValueError):
            esGradient(f, MU, 0.0, 10, seed=0)
        with self.assertRaises(ValueError):
            steinGradient(f, MU, -1.0, 10, seed=0)


class NoiseTestCase(unittest.TestCase):
    def test_grad_nu(self):
        z = np.array([0.3, -0.8])
        for family in ('gaussian', 'gumbel_shifted', 'logistic'):
            noise = NoiseModel(family)
            g = noise.gradNu(z)
            for i in range(2):
                d = directionalDerivative(noise.nu, z, np.eye(2)[i])
                with self.subTest(family=family, i=i):
                    self.assertAlmostEqual(d, g[i], places=8)

    def test_uniform(self):
        noise = NoiseModel('uniform')
        self.assertEqual(noise.nu([0.2]), 0.0)
        self.assertEqual(noise.nu([0.7]), float('inf'))
        assert_allclose(noise.gradNu([0.2]), [0.0])

    def test_zero_mean(self):
        for family in ('gaussian', 'gumbel_shifted', 'uniform', 'logistic'):
            rng = splitRngs(17, 1)[0]
            sample = NoiseModel(family).sample(rng, (20000,))
            report = EstimatorReport.fromSamples(sample, 17)
            with self.subTest(family=family):
                self.assertLess(abs(float(report.estimate)),
                                5 * float(report.stdError))

    def test_unknown_family(self):
        with self.assertRaisesRegex(ValueError, 'unknown family'):
            NoiseModel('cauchy')


class ReportTestCase(unittest.TestCase):
    def test_deterministic(self):
        for tag, fn in ESTIMATOR_FIXTURES.items():
            with self.subTest(tag=tag):
                self.assertEqual(fn(200, 3).toCsvRow(), fn(200, 3).toCsvRow())

    def test_seed_matters(self):
        a = ESTIMATOR_FIXTURES['sfe'](200, 1)
        b = ESTIMATOR_FIXTURES['sfe'](200, 2)
        self.assertFalse(np.array_equal(a.estimate, b.estimate))

    def test_combine_equals_pooled(self):
        rng = np.random.default_rng(18)
        samples = rng.standard_normal((90, 2))
        parts = [EstimatorReport.fromSamples(samples[a:b], 0)
                 for a, b in ((0, 10), (10, 55), (55, 90))]
        merged = EstimatorReport.combine(parts)
        pooled = EstimatorReport.fromSamples(samples, 0)
        self.assertEqual(merged.numSamples, 90)
        assert_allclose(merged.estimate, pooled.estimate, rtol=1e-12)
        assert_allclose(merged.variance, pooled.variance, rtol=1e-12)

    def test_split_streams_differ(self):
        a, b = splitRngs(0, 2)
        self.assertNotEqual(a.standard_normal(), b.standard_normal())

    def test_csv_row(self):
        report = EstimatorReport(np.array([0.5, 0.25]), 4,
                                 np.array([0.01, 0.02]), 7)
        self.assertEqual(report.toCsvRow(), '0.5,0.25,4,0.03,7')

    def test_single_sample(self):
        report = EstimatorReport.fromSamples([[1.0, 2.0]], 0)
        assert_allclose(report.variance, [0.0, 0.0])
        with self.assertRaises(ValueError):
            EstimatorReport.fromSamples(np.zeros((0, 2)), 0)


if __name__ == '__main__':
    unittest.main()
