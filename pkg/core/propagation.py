"""
Probabilistic perspective projection.

Height beliefs for the 2D (pixels) and 3D (meters) object height are pushed
through d = f * h3d / h2d with first-order uncertainty propagation, then
corrected by an independent learned bias stream. The resulting depth belief
is represented as a Laplace distribution; ``mc_oracle`` measures how far that
first-order picture is from the sampled ratio.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .distributions import LaplaceDist
from .exceptions import DomainError

logger = logging.getLogger(__name__)

# Samples with h2d at or below this fraction of its mean are redrawn
TAIL_GUARD = 0.1

MIN_ORACLE_SAMPLES = 10_000


@dataclass(frozen=True)
class HeightBeliefs:
    h2d: LaplaceDist
    h3d: LaplaceDist

    def __post_init__(self):
        if not self.h2d.mu > 0:
            raise DomainError(f'2D height mean must be positive, got {self.h2d.mu}')
        if not self.h3d.mu > 0:
            raise DomainError(f'3D height mean must be positive, got {self.h3d.mu}')

    @classmethod
    def from_values(cls, mu_h2d, sigma_h2d, mu_h3d, sigma_h3d):
        return cls(h2d=LaplaceDist(mu_h2d, sigma_h2d), h3d=LaplaceDist(mu_h3d, sigma_h3d))


@dataclass(frozen=True)
class DepthBelief:
    """Projected, bias and final depth distributions (meters)"""
    mu_p: float
    sigma_p: float
    mu_b: float
    sigma_b: float
    mu_d: float
    sigma_d: float

    def __post_init__(self):
        if self.sigma_p < 0 or self.sigma_b < 0 or self.sigma_d < 0:
            raise DomainError('Depth belief standard deviations must be non-negative')

    @classmethod
    def compose(cls, mu_p, sigma_p, mu_b=0.0, sigma_b=0.0):
        mu_d, sigma_d = combine_bias(mu_p, sigma_p, mu_b, sigma_b)
        return cls(mu_p=mu_p, sigma_p=sigma_p, mu_b=mu_b, sigma_b=sigma_b, mu_d=mu_d, sigma_d=sigma_d)

    @property
    def distribution(self):
        return LaplaceDist(self.mu_d, self.sigma_d)

    def to_dict(self):
        return {
            'mu_p': self.mu_p, 'sigma_p': self.sigma_p,
            'mu_b': self.mu_b, 'sigma_b': self.sigma_b,
            'mu_d': self.mu_d, 'sigma_d': self.sigma_d,
        }


def propagate(beliefs, f):
    """
    Projected depth mean and standard deviation.

    mu_p = f * mu3d / mu2d
    sigma_p = mu_p * sqrt((sigma2d / mu2d)^2 + (sigma3d / mu3d)^2)
    """
    if not f > 0:
        raise DomainError(f'Focal length must be positive, got {f}')
    h2d, h3d = beliefs.h2d, beliefs.h3d
    if not h2d.mu > 0:
        raise DomainError(f'2D height mean must be positive, got {h2d.mu}')
    mu_p = f * h3d.mu / h2d.mu
    sigma_p = mu_p * math.hypot(h2d.sigma / h2d.mu, h3d.sigma / h3d.mu)
    return mu_p, sigma_p


def legacy_geu(h2d, h3d, f):
    """Projection with a fixed 2D height: only the 3D height uncertainty propagates"""
    if not h2d > 0:
        raise DomainError(f'2D height must be positive, got {h2d}')
    if not f > 0:
        raise DomainError(f'Focal length must be positive, got {f}')
    return f * h3d.mu / h2d, f * h3d.sigma / h2d


def combine_bias(mu_p, sigma_p, mu_b, sigma_b):
    """Add an independent bias belief to the projected depth"""
    if sigma_p < 0 or sigma_b < 0:
        raise DomainError(f'Standard deviations must be non-negative, got {sigma_p}, {sigma_b}')
    return mu_p + mu_b, math.hypot(sigma_p, sigma_b)


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    std: float
    count: int
    rejected: int

    @property
    def rejection_rate(self):
        drawn = self.count + self.rejected
        return self.rejected / drawn if drawn else 0.0

    @property
    def m2(self):
        """Sum of squared deviations, for merging"""
        return self.std ** 2 * (self.count - 1)

    def merge(self, other):
        """Count-weighted combination of two sample moments"""
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta ** 2 * self.count * other.count / count
        return MonteCarloEstimate(
            mean=mean,
            std=math.sqrt(m2 / (count - 1)),
            count=count,
            rejected=self.rejected + other.rejected,
        )


def _draw_guarded_h2d(h2d, n, rng):
    values = h2d.sample(rng, n)
    floor = TAIL_GUARD * h2d.mu
    rejected = 0
    bad = values <= floor
    while np.any(bad):
        redraw = int(bad.sum())
        rejected += redraw
        values[bad] = h2d.sample(rng, redraw)
        bad = values <= floor
    return values, rejected


def _sample_ratio(beliefs, f, n, rng):
    h2d_samples, rejected = _draw_guarded_h2d(beliefs.h2d, n, rng)
    h3d_samples = beliefs.h3d.sample(rng, n)
    depths = f * h3d_samples / h2d_samples
    return MonteCarloEstimate(
        mean=float(depths.mean()),
        std=float(depths.std(ddof=1)),
        count=n,
        rejected=rejected,
    )


def _check_oracle_size(n):
    if n < MIN_ORACLE_SAMPLES:
        raise DomainError(f'mc_oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {n}')


def _warn_on_rejections(estimate):
    if estimate.rejection_rate > 0.01:
        logger.warning(f'Monte-Carlo tail guard rejected {estimate.rejection_rate:.2%} of 2D height draws')
    return estimate


def mc_oracle(beliefs, f, n, rng):
    """Sample statistics of f * h3d / h2d over n independent draws"""
    _check_oracle_size(n)
    return _warn_on_rejections(_sample_ratio(beliefs, f, n, rng))


def mc_oracle_sharded(beliefs, f, n, seed, shards=4):
    """
    ``mc_oracle`` split over independent substreams spawned from ``seed``.

    The sample minimum applies to the total, not to each shard. Shards are
    merged by count-weighted moments, so the result depends only on
    (seed, n, shards), never on execution order.
    """
    _check_oracle_size(n)
    if not 1 <= shards <= n // 2:
        raise DomainError(f'shards must lie in [1, {n // 2}], got {shards}')
    children = np.random.SeedSequence(seed).spawn(shards)
    sizes = [n // shards + (1 if i < n % shards else 0) for i in range(shards)]
    merged = None
    for child, size in zip(children, sizes):
        part = _sample_ratio(beliefs, f, size, np.random.default_rng(child))
        merged = part if merged is None else merged.merge(part)
    return _warn_on_rejections(merged)
