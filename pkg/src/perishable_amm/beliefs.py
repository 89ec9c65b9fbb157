"""Monte Carlo harness for the provider-belief model.

Every provider draws a belief ``c_l`` about the profit-maximizing constant
``c_star`` from a common distribution. The pool aggregates the beliefs as a
share-weighted geometric mean. A provider that reports ``a * c_l`` instead
of its belief moves the aggregate to ``a ** s_l * c``. The experiments here
compare honest and scaled reports by sampling, using one shared stream of
draws for both so that differences are not sampling noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

DISTRIBUTIONS = ("lognormal", "gamma", "point")


@dataclass(frozen=True)
class BeliefModel:
    c_star: float
    shares: tuple
    distribution: str = "lognormal"
    sigma: float = 0.25
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shares", tuple(float(s) for s in self.shares))
        if self.distribution not in DISTRIBUTIONS:
            raise DomainError(f"unknown distribution {self.distribution!r}; choose from {DISTRIBUTIONS}")
        if not self.c_star > 0:
            raise DomainError("c_star must be positive")
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")
        if any(s < 0 for s in self.shares) or abs(math.fsum(self.shares) - 1.0) > 1e-12:
            raise DomainError("shares must be nonnegative and sum to 1")


def base_draws(model: BeliefModel, size, rng) -> np.ndarray:
    """Draws from the belief distribution, parameterized to have mean ``c_star``.

    ``sigma`` is the log-scale for the log-normal and the coefficient of
    variation for the gamma.
    """
    if model.distribution == "point" or model.sigma == 0:
        return np.full(size, model.c_star)
    if model.distribution == "lognormal":
        mu = math.log(model.c_star) - model.sigma**2 / 2
        return rng.lognormal(mu, model.sigma, size)
    shape = 1.0 / model.sigma**2
    return rng.gamma(shape, model.c_star / shape, size)


@dataclass
class SampleSet:
    samples: np.ndarray
    c_star: float
    geometric_of_means: float = float("nan")

    @property
    def mean(self):
        return float(self.samples.mean())

    @property
    def se(self):
        n = self.samples.size
        return float(self.samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    @property
    def bias(self):
        """Sample estimate of ``E[c] - c_star``."""
        return self.mean - self.c_star


def _belief_matrix(model, replicas):
    rng = np.random.default_rng(model.seed)
    return base_draws(model, (replicas, len(model.shares)), rng)


def sample_aggregate(model: BeliefModel, replicas: int) -> SampleSet:
    """``replicas`` independent draws of the aggregate constant."""
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    draws = _belief_matrix(model, replicas)
    shares = np.asarray(model.shares)
    if model.distribution == "point" or model.sigma == 0:
        c = np.full(replicas, model.c_star)
    else:
        c = np.exp(np.log(draws) @ shares)
    gom = float(np.exp(np.log(draws.mean(axis=0)) @ shares))
    return SampleSet(c, model.c_star, gom)


def misreport_aggregate(model: BeliefModel, provider_index: int, a: float, replicas: int) -> SampleSet:
    """Aggregate when provider ``provider_index`` reports ``a`` times its belief.

    Uses the same draws as :func:`sample_aggregate` under the model's seed,
    so the result is exactly ``a ** s_l`` times the honest samples.
    """
    if not a > 0:
        raise DomainError("a must be positive")
    honest = sample_aggregate(model, replicas)
    scale = a ** model.shares[provider_index]
    return SampleSet(scale * honest.samples, model.c_star, scale * honest.geometric_of_means)


@dataclass
class DensityReport:
    discrepancy: float
    edges: np.ndarray
    observed: np.ndarray
    predicted: np.ndarray

    @property
    def observed_mass(self):
        return float(self.observed.sum())

    @property
    def predicted_mass(self):
        return float(self.predicted.sum())


def density_transform_check(model, provider_index, a, bins=64, replicas=10**6, coupled=True) -> DensityReport:
    """Compare the histogram of misreported aggregates with the transformed
    honest histogram.

    If ``d = a**s * c`` then the density of ``d`` is
    ``g(x) = a**-s * f(x / a**s)``: the honest histogram mapped through
    ``x -> a**s x`` with its height scaled by ``a**-s``. Bin masses of both
    are compared; ``discrepancy`` is the largest absolute difference in
    probability mass over the bins. With ``coupled=False`` the misreport
    samples come from an independent stream.
    """
    if bins < 1:
        raise DomainError("bins must be >= 1")
    honest = sample_aggregate(model, replicas).samples
    scale = a ** model.shares[provider_index]
    if coupled:
        d = scale * honest
    else:
        other = BeliefModel(model.c_star, model.shares, model.distribution, model.sigma, model.seed + 1)
        d = scale * sample_aggregate(other, replicas).samples
    lo = min(d.min(), scale * honest.min())
    hi = max(d.max(), scale * honest.max())
    if hi <= lo:
        hi = lo * (1 + 1e-12) + 1e-12
    edges = np.linspace(lo, hi, bins + 1)
    observed = np.histogram(d, edges)[0] / d.size
    # pull the bins back to the honest scale, then push the density forward
    back = edges / scale
    back[0], back[-1] = min(back[0], honest.min()), max(back[-1], honest.max())
    f = np.histogram(honest, back)[0] / (honest.size * np.diff(back))
    g = f / scale
    predicted = g * np.diff(edges)
    return DensityReport(float(np.abs(observed - predicted).max()), edges, observed, predicted)


@dataclass
class ProfitFunction:
    evaluator: Callable
    c_star: float = field(default=1.0)

    def __call__(self, c):
        return self.evaluator(c)

    @classmethod
    def peaked(cls, c_star, width=1.0):
        """``exp(-((ln c - ln c_star) / width) ** 2)``: unimodal at ``c_star``
        and vanishing at 0 and infinity."""
        log_star = math.log(c_star)
        return cls(lambda c: np.exp(-(((np.log(c) - log_star) / width) ** 2)), c_star)

    def validate(self, points=2001, span=1e3):
        """Sampled check of the profit-function assumptions."""
        left = np.geomspace(self.c_star / span, self.c_star, points)
        right = np.geomspace(self.c_star, self.c_star * span, points)
        r_left, r_right = np.asarray(self(left)), np.asarray(self(right))
        peak = float(self(np.array([self.c_star]))[0])
        return bool(
            np.all(r_left >= 0)
            and np.all(r_right >= 0)
            and np.all(np.diff(r_left) > 0)
            and np.all(np.diff(r_right) < 0)
            and peak >= r_left.max()
            and peak >= r_right.max()
            and r_left[0] < 1e-3 * peak
            and r_right[-1] < 1e-3 * peak
        )


@dataclass(frozen=True)
class HonestyRow:
    a: float
    mean_honest: float
    mean_misreport: float
    se_honest: float
    se_misreport: float
    flag: bool


HONESTY_COLUMNS = ("a", "mean_honest", "mean_misreport", "se_honest", "se_misreport", "flag")


def honesty_experiment(model, profit, provider_index, a_grid, replicas) -> list:
    """Expected profit under honest versus scaled reports.

    A row is flagged when the honest mean profit beats the misreport mean by
    at least three combined standard errors.
    """
    honest = sample_aggregate(model, replicas)
    r_honest = np.asarray(profit(honest.samples), dtype=float)
    n = r_honest.size
    mean_h = float(r_honest.mean())
    se_h = float(r_honest.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    rows = []
    for a in a_grid:
        d = (a ** model.shares[provider_index]) * honest.samples
        r_mis = np.asarray(profit(d), dtype=float)
        mean_m = float(r_mis.mean())
        se_m = float(r_mis.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        gap = mean_h - mean_m
        flag = gap > 0 and gap >= 3 * math.hypot(se_h, se_m)
        rows.append(HonestyRow(float(a), mean_h, mean_m, se_h, se_m, bool(flag)))
    return rows


def write_honesty_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(HONESTY_COLUMNS)
    for row in rows:
        writer.writerow([repr(row.a), repr(row.mean_honest), repr(row.mean_misreport),
                         repr(row.se_honest), repr(row.se_misreport), str(row.flag).lower()])
