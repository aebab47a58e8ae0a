"""
Uncertainty regression losses and a toy fitter.

All losses take (mu, sigma, gt) with sigma the standard deviation and return a
LossEval holding the value and the analytic gradients. For the beta-NLL forms
the prefactor is a stop-gradient constant: it scales the gradients but is not
differentiated itself. Inputs may be scalars or numpy arrays.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .choices import DistributionFamily, LossMode
from .exceptions import DomainError, FitDivergedError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

SIGMA_FLOOR = 1e-4

# toy_fit optimiser moments and denominator guard
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-12


@dataclass(frozen=True)
class LossEval:
    value: float
    d_mu: float
    d_sigma: float


def _prepare(mu, sigma, gt, beta=0.0):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise DomainError('sigma must be strictly positive')
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f'beta must lie in [0, 1], got {beta}')
    return np.asarray(mu, dtype=float), sigma, np.asarray(gt, dtype=float)


def _unwrap(value):
    return float(value) if np.ndim(value) == 0 else value


def beta_nll_laplace(mu, sigma, gt, beta=0.5):
    """(sigma/sqrt2)^beta * (sqrt2/sigma * |mu - gt| + log sigma), prefactor held constant"""
    mu, sigma, gt = _prepare(mu, sigma, gt, beta)
    residual = mu - gt
    weight = (sigma / SQRT2) ** beta
    value = weight * (SQRT2 / sigma * np.abs(residual) + np.log(sigma))
    d_mu = weight * (SQRT2 / sigma) * np.sign(residual)
    d_sigma = weight * (1.0 / sigma - SQRT2 * np.abs(residual) / sigma ** 2)
    return LossEval(_unwrap(value), _unwrap(d_mu), _unwrap(d_sigma))


def nll_laplace(mu, sigma, gt):
    return beta_nll_laplace(mu, sigma, gt, beta=0.0)


def beta_nll_gauss(mu, sigma, gt, beta=0.5):
    """(sigma^2)^beta * ((mu - gt)^2 / (2 sigma^2) + log sigma), prefactor held constant"""
    mu, sigma, gt = _prepare(mu, sigma, gt, beta)
    residual = mu - gt
    weight = (sigma ** 2) ** beta
    value = weight * (residual ** 2 / (2.0 * sigma ** 2) + np.log(sigma))
    d_mu = weight * residual / sigma ** 2
    d_sigma = weight * (1.0 / sigma - residual ** 2 / sigma ** 3)
    return LossEval(_unwrap(value), _unwrap(d_mu), _unwrap(d_sigma))


def nll_gauss(mu, sigma, gt):
    return beta_nll_gauss(mu, sigma, gt, beta=0.0)


BETA_LOSSES = {
    DistributionFamily.LAPLACE: beta_nll_laplace,
    DistributionFamily.GAUSS: beta_nll_gauss,
}


@dataclass(frozen=True)
class FitResult:
    mu_hat: float
    sigma_hat: float
    steps: int
    loss: float


def toy_fit(samples, beta=0.5, steps=2000, lr=0.05, init_mu=0.0, init_sigma=1.0, sigma_floor=SIGMA_FLOOR,
            family=DistributionFamily.LAPLACE):
    """
    Fit a single (mu, sigma) to ``samples`` by minimising the mean beta-NLL of
    ``family``.

    sigma is optimised as log(sigma) and clamped at ``sigma_floor``. For the
    Laplace family the stationary point is mu = median, sigma = sqrt2 *
    mean|samples - mu|; for the Gaussian it is the sample mean and std.
    Updates are Adam steps, so the beta prefactor changes the path but not
    the step length; zero-noise samples drive sigma all the way to the floor.
    """
    loss_fn = BETA_LOSSES[DistributionFamily(family)]
    samples = np.asarray(samples, dtype=float)
    if samples.size < 1000:
        raise DomainError(f'toy_fit needs at least 1000 samples, got {samples.size}')
    params = np.array([float(init_mu), math.log(max(init_sigma, sigma_floor))])
    log_floor = math.log(sigma_floor)
    first = np.zeros(2)
    second = np.zeros(2)
    loss = math.nan
    for step in range(steps):
        sigma = math.exp(params[1])
        evaluation = loss_fn(params[0], sigma, samples, beta)
        loss = float(np.mean(evaluation.value))
        if not math.isfinite(loss):
            raise FitDivergedError(f'Loss became non-finite at step {step}', step=step)
        grad = np.array([np.mean(evaluation.d_mu), np.mean(evaluation.d_sigma) * sigma])
        first = ADAM_BETAS[0] * first + (1.0 - ADAM_BETAS[0]) * grad
        second = ADAM_BETAS[1] * second + (1.0 - ADAM_BETAS[1]) * grad ** 2
        first_hat = first / (1.0 - ADAM_BETAS[0] ** (step + 1))
        second_hat = second / (1.0 - ADAM_BETAS[1] ** (step + 1))
        params -= lr * first_hat / (np.sqrt(second_hat) + ADAM_EPS)
        params[1] = max(params[1], log_floor)
    logger.debug(f'toy_fit finished after {steps} steps with loss {loss:.6f}')
    sigma_hat = sigma_floor if params[1] <= log_floor else math.exp(params[1])
    return FitResult(mu_hat=float(params[0]), sigma_hat=sigma_hat, steps=steps, loss=loss)


def compose_total_loss(losses, weights=None, mode=LossMode.SUM):
    """
    Combine per-task losses.

    ``sum`` adds them directly; ``htl`` applies the per-task weights produced by
    the hierarchical task scheduler.
    """
    mode = LossMode(mode)
    if mode == LossMode.SUM:
        return float(sum(losses.values()))
    if weights is None:
        raise DomainError('HTL composition needs per-task weights')
    missing = set(losses) - set(weights)
    if missing:
        raise DomainError(f'Missing HTL weights for tasks: {sorted(missing)}')
    return float(sum(weights[task] * value for task, value in losses.items()))
