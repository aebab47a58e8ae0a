"""
Location-scale distributions used by the uncertainty pipeline.

Throughout the toolkit ``sigma`` is the standard deviation. For the Laplace
family the scale parameter is b = sigma / sqrt(2), so the density at the mode
is 1 / (sqrt(2) * sigma). A sigma of exactly zero is accepted as a point mass.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .choices import DistributionFamily
from .exceptions import DomainError

SQRT2 = math.sqrt(2.0)

HISTOGRAM_BINS = 100
HISTOGRAM_RANGE = (-5.0, 5.0)


def _check_sigma(sigma):
    if not (math.isfinite(sigma) and sigma >= 0):
        raise DomainError(f'sigma must be a non-negative finite number, got {sigma}')


@dataclass(frozen=True)
class LaplaceDist:
    mu: float
    sigma: float

    def __post_init__(self):
        _check_sigma(self.sigma)

    @property
    def scale(self):
        return self.sigma / SQRT2

    @property
    def variance(self):
        return self.sigma ** 2

    def pdf(self, x):
        if self.sigma == 0:
            raise DomainError('A point-mass distribution has no density')
        b = self.scale
        return np.exp(-np.abs(np.asarray(x, dtype=float) - self.mu) / b) / (2.0 * b)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.sigma == 0:
            return np.where(x >= self.mu, 1.0, 0.0)
        z = (x - self.mu) / self.scale
        return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))

    def interval_prob(self, a, b):
        return interval_prob(self, a, b)

    def sample(self, rng, size=None):
        return sample(self, rng, size)


@dataclass(frozen=True)
class GaussDist:
    mu: float
    sigma: float

    def __post_init__(self):
        _check_sigma(self.sigma)

    @property
    def variance(self):
        return self.sigma ** 2

    def pdf(self, x):
        if self.sigma == 0:
            raise DomainError('A point-mass distribution has no density')
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.sigma == 0:
            return np.where(x >= self.mu, 1.0, 0.0)
        return special.ndtr((x - self.mu) / self.sigma)

    def interval_prob(self, a, b):
        return interval_prob(self, a, b)

    def sample(self, rng, size=None):
        return sample(self, rng, size)


def laplace_pdf(dist, x):
    return dist.pdf(x)


def laplace_cdf(dist, x):
    return dist.cdf(x)


def interval_prob(dist, a, b):
    """Probability mass of ``dist`` on [a, b]"""
    if a > b:
        raise DomainError(f'Interval lower bound {a} exceeds upper bound {b}')
    return float(dist.cdf(b) - dist.cdf(a))


def sample(dist, rng, size=None):
    """
    Draw from ``dist`` with a numpy Generator.

    Laplace draws use the inverse CDF, so a seeded generator yields the same
    stream on every run.
    """
    if dist.sigma == 0:
        return dist.mu if size is None else np.full(size, float(dist.mu))
    if isinstance(dist, LaplaceDist):
        u = rng.uniform(-0.5, 0.5, size)
        # 2|u| < 1 keeps log1p finite; uniform may return exactly -0.5
        tail = np.minimum(2.0 * np.abs(u), np.nextafter(1.0, 0.0))
        values = dist.mu - dist.scale * np.sign(u) * np.log1p(-tail)
    else:
        values = rng.normal(dist.mu, dist.sigma, size)
    return float(values) if size is None else values


def standardize(values, mus, sigmas):
    """Elementwise residuals (value - mu) / sigma"""
    values = np.asarray(values, dtype=float)
    mus = np.asarray(mus, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if not (values.shape == mus.shape == sigmas.shape):
        raise DomainError(
            f'standardize needs equal lengths, got {values.shape}, {mus.shape}, {sigmas.shape}'
        )
    if np.any(sigmas <= 0):
        raise DomainError('standardize needs strictly positive sigmas')
    return (values - mus) / sigmas


@dataclass(frozen=True)
class ResidualHistogram:
    """Density-normalised histogram of standardized residuals"""
    edges: np.ndarray
    densities: np.ndarray
    count: int

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self):
        return np.diff(self.edges)

    @classmethod
    def from_values(cls, residuals, bins=HISTOGRAM_BINS, value_range=HISTOGRAM_RANGE):
        """
        Histogram over ``value_range``; mass outside the range is dropped and
        the remaining bins are renormalised to unit area.
        """
        residuals = np.asarray(residuals, dtype=float)
        lo, hi = value_range
        inside = residuals[(residuals >= lo) & (residuals <= hi)]
        if inside.size == 0:
            raise DomainError('No residuals fall inside the histogram range')
        densities, edges = np.histogram(inside, bins=bins, range=value_range, density=True)
        return cls(edges=edges, densities=densities, count=int(inside.size))

    def to_rows(self):
        return [
            {'center': float(c), 'density': float(d)}
            for c, d in zip(self.centers, self.densities)
        ]


STANDARD_MEMBERS = {
    DistributionFamily.LAPLACE: LaplaceDist(0.0, 1.0),
    DistributionFamily.GAUSS: GaussDist(0.0, 1.0),
}


def fit_error(histogram, family):
    """Mean absolute gap between bin densities and the standard member's pdf at bin centers"""
    if histogram.count == 0 or histogram.densities.size == 0:
        raise DomainError('Cannot fit an empty histogram')
    reference = STANDARD_MEMBERS[DistributionFamily(family)]
    return float(np.mean(np.abs(histogram.densities - reference.pdf(histogram.centers))))
