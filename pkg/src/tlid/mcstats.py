"""
Monte Carlo estimates, distribution distances and Taylor's-law regression.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .errors import DegenerateFitError, DomainError, EmptyInputError, InsufficientDataError

logger = logging.getLogger(__name__)

Z95 = 1.96
DEFAULT_TAIL = 1e-6
MAX_CUTOFF = 1_000_000


@dataclass(frozen=True)
class EstimateCI:
    point: float
    stderr: float
    ci95_low: float
    ci95_high: float
    n: int

    @classmethod
    def from_point(cls, point: float, stderr: float, n: int) -> 'EstimateCI':
        return cls(point, stderr, point - Z95 * stderr, point + Z95 * stderr, n)

    def contains(self, value: float) -> bool:
        return self.ci95_low <= value <= self.ci95_high

    def within(self, value: float, n_se: float) -> bool:
        return abs(self.point - value) <= n_se * self.stderr


@dataclass(frozen=True)
class EmpiricalMoments:
    mean: EstimateCI
    variance: EstimateCI


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise EmptyInputError("no samples")
    return x


def empirical_moments(samples, bootstrap: bool = False, rng: Optional[np.random.Generator] = None,
                      n_resamples: int = 999) -> EmpiricalMoments:
    """
    Mean and unbiased variance with standard errors. The variance's standard
    error uses the fourth-central-moment plug-in unless ``bootstrap`` is set.
    """
    x = _as_samples(samples)
    n = x.size
    if n < 4:
        raise InsufficientDataError(f"empirical moments need at least 4 samples, got {n}")

    mean = float(x.mean())
    dev = x - mean
    var = float(np.dot(dev, dev) / (n - 1))
    m4 = float(np.mean(dev ** 4))
    var_of_var = max(0.0, (m4 - (n - 3) / (n - 1) * var * var) / n)
    var_se = math.sqrt(var_of_var)

    if bootstrap:
        res = stats.bootstrap(
            (x,), lambda s, axis: np.var(s, ddof=1, axis=axis),
            vectorized=True, n_resamples=n_resamples, method="percentile",
            random_state=rng if rng is not None else np.random.default_rng(0),
        )
        var_se = float(res.standard_error)

    return EmpiricalMoments(
        mean=EstimateCI.from_point(mean, math.sqrt(var / n), n),
        variance=EstimateCI.from_point(var, var_se, n),
    )


def zero_fraction(samples) -> EstimateCI:
    x = _as_samples(samples)
    frac = float(np.mean(x == 0))
    return EstimateCI.from_point(frac, math.sqrt(frac * (1.0 - frac) / x.size), x.size)


@dataclass(frozen=True)
class TLFit:
    a_hat: float
    b_hat: float
    r_squared: float
    n_points: int
    residuals: np.ndarray


def fit_taylor(points: Union[Sequence[Tuple[float, float]], np.ndarray]) -> TLFit:
    """Ordinary least squares of log sigma2 on log mu."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("fit_taylor needs a sequence of (mu, sigma2) pairs")
    if arr.shape[0] < 2:
        raise InsufficientDataError(f"fit_taylor needs at least 2 points, got {arr.shape[0]}")
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise DomainError("every mu and sigma2 must be a finite number > 0")

    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    if np.ptp(x) == 0.0:
        raise DegenerateFitError("all log mu values are equal; the slope is undefined")

    res = stats.linregress(x, y)
    residuals = y - (res.intercept + res.slope * x)
    logger.debug("fit_taylor: n=%d a=%.12g b=%.12g r=%.12g", x.size, res.intercept, res.slope, res.rvalue)
    return TLFit(
        a_hat=float(res.intercept),
        b_hat=float(res.slope),
        r_squared=float(res.rvalue ** 2),
        n_points=int(x.size),
        residuals=residuals,
    )


def choose_cutoff(pmf_values: Sequence[float], tail: float = DEFAULT_TAIL) -> int:
    """Smallest K with analytic mass at or above K below ``tail``."""
    p = np.asarray(pmf_values, dtype=float)
    remaining = 1.0 - np.cumsum(p)
    hits = np.flatnonzero(remaining < tail)
    if not hits.size:
        raise DomainError(f"analytic pmf of length {p.size} leaves {remaining[-1]:.3e} of mass above its end")
    return int(hits[0]) + 1


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    a = np.asarray(p, dtype=float)
    b = np.asarray(q, dtype=float)
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    return 0.5 * float(np.abs(a - b).sum())


def ks_distance(samples, cdf: Callable) -> float:
    x = _as_samples(samples)
    return float(stats.kstest(x, cdf).statistic)


@dataclass(frozen=True)
class PmfDistance:
    tv: float
    chi2: float
    cutoff: int
    tail_mass: float


def _analytic_array(analytic, need: int, tail: float) -> np.ndarray:
    if not callable(analytic):
        return np.asarray(analytic, dtype=float)
    size = max(need, 64)
    while True:
        values = np.array([analytic(k) for k in range(size)], dtype=float)
        if 1.0 - values.sum() < tail or size >= MAX_CUTOFF:
            return values
        size *= 2


def pmf_distance(counts: Sequence[int], analytic: Union[Callable[[int], float], Sequence[float]],
                 cutoff: Optional[int] = None, tail: float = DEFAULT_TAIL) -> PmfDistance:
    """
    Distance between an empirical histogram (counts per value k) and an
    analytic pmf. Values at or above the cutoff are pooled in one tail bin.
    """
    obs = np.asarray(counts, dtype=float)
    n = obs.sum()
    if obs.size == 0 or n == 0:
        raise EmptyInputError("empty histogram")

    p = _analytic_array(analytic, obs.size, tail)
    k_max = cutoff if cutoff is not None else choose_cutoff(p, tail)
    p = np.pad(p, (0, max(0, k_max - p.size)))
    obs = np.pad(obs, (0, max(0, k_max - obs.size)))

    p_bins = np.append(p[:k_max], max(0.0, 1.0 - p[:k_max].sum()))
    o_bins = np.append(obs[:k_max], obs[k_max:].sum())
    p_hat = o_bins / n

    expected = n * p_bins
    live = expected > 0
    chi2 = float(np.sum((o_bins[live] - expected[live]) ** 2 / expected[live]))
    return PmfDistance(
        tv=total_variation(p_hat, p_bins),
        chi2=chi2,
        cutoff=int(k_max),
        tail_mass=float(p_bins[-1]),
    )


def histogram(samples) -> np.ndarray:
    """Counts per value of nonnegative integer samples."""
    x = np.asarray(samples)
    if x.size == 0:
        raise EmptyInputError("no samples")
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise DomainError("histogram needs nonnegative integer samples")
    return np.bincount(x.astype(np.int64))
