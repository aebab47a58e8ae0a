import math

import numpy as np
import pytest
from django.test import SimpleTestCase
from scipy import optimize

from core.choices import DistributionFamily, LossMode
from core.distributions import LaplaceDist, sample
from core.exceptions import DomainError, FitDivergedError
from core.training import (
    SIGMA_FLOOR,
    beta_nll_gauss,
    beta_nll_laplace,
    compose_total_loss,
    nll_gauss,
    nll_laplace,
    toy_fit,
)

LOSSES = (beta_nll_laplace, beta_nll_gauss)


def prefactor(loss, sigma, beta):
    return (sigma / math.sqrt(2.0)) ** beta if loss is beta_nll_laplace else (sigma ** 2) ** beta


class GradientTestCase(SimpleTestCase):

    def assertRelClose(self, actual, expected, rel=1e-5):
        self.assertLessEqual(abs(actual - expected), rel * max(abs(expected), 1e-2), (actual, expected))

    def test_central_differences(self):
        h = 1e-6
        rng = np.random.default_rng(0)
        for loss in LOSSES:
            for beta in (0.0, 0.5, 1.0):
                for _ in range(20):
                    mu, gt = rng.uniform(-5, 5, size=2)
                    if abs(mu - gt) < 1e-3:
                        continue
                    sigma = rng.uniform(0.2, 3.0)
                    evaluation = loss(mu, sigma, gt, beta)
                    d_mu = (loss(mu + h, sigma, gt, beta).value - loss(mu - h, sigma, gt, beta).value) / (2 * h)
                    self.assertRelClose(evaluation.d_mu, d_mu)

                    # the prefactor is a stop-gradient constant held at the evaluation point
                    weight = prefactor(loss, sigma, beta)

                    def inner(s):
                        return loss(mu, s, gt, beta).value / prefactor(loss, s, beta)

                    d_sigma = weight * (inner(sigma + h) - inner(sigma - h)) / (2 * h)
                    self.assertRelClose(evaluation.d_sigma, d_sigma)

    def test_vectorised_inputs(self):
        evaluation = beta_nll_laplace(np.array([1.0, 2.0]), np.array([0.5, 1.0]), np.array([0.0, 2.0]))
        self.assertEqual(evaluation.value.shape, (2,))
        self.assertEqual(evaluation.d_mu[1], 0.0)


class StationaryPointTestCase(SimpleTestCase):

    def test_sigma_minimiser(self):
        for residual in (0.3, 1.0, 2.5):
            laplace = optimize.minimize_scalar(
                lambda s: nll_laplace(residual, s, 0.0).value, bounds=(1e-3, 50.0), method='bounded',
                options={'xatol': 1e-10},
            )
            gauss = optimize.minimize_scalar(
                lambda s: nll_gauss(residual, s, 0.0).value, bounds=(1e-3, 50.0), method='bounded',
                options={'xatol': 1e-10},
            )
            self.assertAlmostEqual(laplace.x, math.sqrt(2.0) * residual, delta=1e-5 * residual)
            self.assertAlmostEqual(gauss.x, residual, delta=1e-5 * residual)
            self.assertAlmostEqual(nll_laplace(residual, math.sqrt(2.0) * residual, 0.0).d_sigma, 0.0, places=12)

    def test_beta_zero_is_plain_nll(self):
        for mu, sigma, gt in ((1.0, 0.5, 0.2), (-3.0, 2.0, 1.0)):
            self.assertEqual(beta_nll_laplace(mu, sigma, gt, beta=0.0), nll_laplace(mu, sigma, gt))
            self.assertEqual(beta_nll_gauss(mu, sigma, gt, beta=0.0), nll_gauss(mu, sigma, gt))
            self.assertAlmostEqual(
                nll_laplace(mu, sigma, gt).value, math.sqrt(2.0) / sigma * abs(mu - gt) + math.log(sigma),
            )

    def test_invalid_arguments(self):
        with self.assertRaises(DomainError):
            nll_laplace(0.0, 0.0, 1.0)
        with self.assertRaises(DomainError):
            beta_nll_gauss(0.0, 1.0, 1.0, beta=1.5)


class ToyFitTestCase(SimpleTestCase):

    @pytest.mark.slow
    def test_recovers_sigma(self):
        samples = sample(LaplaceDist(2.0, 1.5), np.random.default_rng(3), 100_000)
        for beta in (0.0, 0.5, 1.0):
            result = toy_fit(samples, beta=beta)
            self.assertAlmostEqual(result.mu_hat, 2.0, delta=0.05)
            self.assertLessEqual(abs(result.sigma_hat - 1.5) / 1.5, 0.05, beta)

    def test_needs_enough_samples(self):
        with self.assertRaises(DomainError):
            toy_fit(np.zeros(10))

    def test_noise_free_samples_reach_sigma_floor(self):
        result = toy_fit(np.zeros(1000))
        self.assertEqual(result.mu_hat, 0.0)
        self.assertEqual(result.sigma_hat, SIGMA_FLOOR)

    def test_gaussian_family_reaches_sample_moments(self):
        samples = np.random.default_rng(8).normal(1.0, 2.0, size=5000)
        result = toy_fit(samples, beta=0.5, family=DistributionFamily.GAUSS)
        self.assertAlmostEqual(result.mu_hat, samples.mean(), delta=0.05)
        self.assertAlmostEqual(result.sigma_hat / samples.std(), 1.0, delta=0.02)

    def test_non_finite_loss_diverges(self):
        samples = np.ones(2000)
        samples[5] = np.nan
        with self.assertRaises(FitDivergedError) as ctx:
            toy_fit(samples, steps=10)
        self.assertEqual(ctx.exception.step, 0)


class ComposeTotalLossTestCase(SimpleTestCase):

    def test_sum(self):
        self.assertAlmostEqual(compose_total_loss({'heatmap': 1.0, 'depth': 2.5}), 3.5)

    def test_weighted(self):
        total = compose_total_loss({'heatmap': 1.0, 'depth': 2.0}, {'heatmap': 1.0, 'depth': 0.25}, LossMode.HTL)
        self.assertAlmostEqual(total, 1.5)

    def test_weighted_needs_every_task(self):
        with self.assertRaises(DomainError):
            compose_total_loss({'heatmap': 1.0}, mode=LossMode.HTL)
        with self.assertRaises(DomainError):
            compose_total_loss({'heatmap': 1.0, 'depth': 1.0}, {'heatmap': 1.0}, LossMode.HTL)
