"""
The five two-parameter infinitely divisible families.

Each family is a frozen dataclass; ``FamilyParams`` is their common base.
q = 1 - p is always derived, never stored. Moments, log-Laplace transforms,
pgfs, pmfs (as power-series coefficients) and exact samplers live on the
classes; the module-level functions are the public entry points.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, ClassVar, Dict, Optional, Union

import numpy as np
from scipy import special, stats

from .errors import DomainError, TruncationError, UnsupportedOperationError
from .series import PowerSeries, ps_div, ps_exp

logger = logging.getLogger(__name__)

TWEBLE_ALPHA_MIN = -40.0
PMF_CLAMP_TOL = 1e-12

ArrayLike = Union[float, np.ndarray]


class FamilyKind(str, Enum):
    TWEBLE = "tweble"
    NEGBIN = "negbin"
    CPGEO = "cpgeo"
    POLYA_AEPPLI = "polya-aeppli"
    GAMMA = "gamma"


@dataclass(frozen=True)
class Moments:
    mu: float
    sigma2: float

    @property
    def log_mu(self) -> float:
        return math.log(self.mu)

    @property
    def log_sigma2(self) -> float:
        return math.log(self.sigma2)


def _check_probability(name: str, p: float) -> None:
    if not (0.0 < p < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {p!r}")


def _check_positive(name: str, x: float) -> None:
    if not (x > 0.0 and math.isfinite(x)):
        raise DomainError(f"{name} must be a finite positive number, got {x!r}")


def _check_lambda(ok, fam: 'FamilyParams', lam) -> None:
    if not np.all(ok):
        raise DomainError(f"lambda={lam!r} is outside the log-Laplace domain of {fam.label}")


def _check_z(z) -> None:
    z_arr = np.asarray(z, dtype=float)
    if np.any((z_arr < 0.0) | (z_arr > 1.0)) or np.any(np.isnan(z_arr)):
        raise DomainError(f"pgf argument z must lie in [0, 1], got {z!r}")


@dataclass(frozen=True)
class FamilyParams(ABC):
    kind: ClassVar[FamilyKind]
    discrete: ClassVar[bool] = False

    def __post_init__(self):
        self.validate()

    @abstractmethod
    def validate(self) -> None:
        ...

    @abstractmethod
    def moments(self) -> Moments:
        ...

    @abstractmethod
    def llt(self, lam: ArrayLike) -> ArrayLike:
        ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, size=None):
        ...

    @property
    def label(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        return f"{self.kind.value}({args})"

    def params(self) -> Dict[str, float]:
        return asdict(self)

    def with_params(self, **changes: float) -> 'FamilyParams':
        return replace(self, **changes)

    def plst(self, lam: ArrayLike) -> ArrayLike:
        return np.exp(-self.llt(lam))

    def pgf(self, z: ArrayLike) -> ArrayLike:
        raise UnsupportedOperationError(f"{self.label} is continuous; pgf is defined for discrete families only")

    def pgf_series(self, order: int, shift: float = 0.0, scale: float = 1.0) -> PowerSeries:
        """Coefficients of phi(shift + scale*z) up to z^(order-1)."""
        raise UnsupportedOperationError(f"{self.label} is continuous; no pgf series")

    def pmf_array(self, order: int) -> np.ndarray:
        if not self.discrete:
            raise UnsupportedOperationError(f"{self.label} is continuous; pmf is defined for discrete families only")
        coeffs = np.array(self.pgf_series(order).coeffs)
        worst = coeffs.min()
        if worst < -PMF_CLAMP_TOL:
            k = int(np.argmin(coeffs))
            raise TruncationError(
                f"pmf coefficient {k} of {self.label} is {worst:.3e} at order {order}; "
                "increase the truncation order"
            )
        coeffs[coeffs < 0.0] = 0.0
        return coeffs

    def pmf(self, k: int, order: Optional[int] = None) -> float:
        if k < 0:
            raise DomainError(f"k must be a nonnegative integer, got {k}")
        order = order if order is not None else max(64, k + 1)
        if k >= order:
            raise DomainError(f"k={k} must be below the truncation order {order}")
        return float(self.pmf_array(order)[k])

    def frozen(self):
        """Matching scipy.stats frozen law, when scipy has one."""
        raise UnsupportedOperationError(f"scipy.stats has no counterpart for {self.label}")


@dataclass(frozen=True)
class TweBLE(FamilyParams):
    """
    Tweedie-Bar-Lev-Enis law with power parameter alpha and canonical theta.

    alpha = -inf is the Poisson limit (k(theta) = 1 - exp(-theta)), alpha = 0
    the exponential (k(theta) = log theta). The fractional power
    (theta/(1-alpha))**alpha requires theta/(1-alpha) > 0: theta > 0 for
    alpha < 1, theta < 0 for alpha in (1, 2].
    """

    alpha: float
    theta: float
    kind: ClassVar[FamilyKind] = FamilyKind.TWEBLE

    def validate(self) -> None:
        a, t = self.alpha, self.theta
        if math.isnan(a) or math.isnan(t) or not math.isfinite(t):
            raise DomainError("TweBLE parameters must be numbers")
        if a == -math.inf:
            if t <= 0.0:
                raise DomainError(f"TweBLE(alpha=-inf) needs theta > 0, got {t!r}")
            return
        if not (TWEBLE_ALPHA_MIN <= a <= 2.0) or a == 1.0:
            raise DomainError(
                f"TweBLE alpha must lie in {{-inf}} U [{TWEBLE_ALPHA_MIN:g}, 1) U (1, 2], got {a!r}"
            )
        if a < 1.0 and t <= 0.0:
            raise DomainError(f"TweBLE with alpha < 1 needs theta > 0, got {t!r}")
        if a > 1.0 and t >= 0.0:
            raise DomainError(f"TweBLE with alpha in (1, 2] needs theta < 0 so that theta/(1-alpha) > 0, got {t!r}")

    @property
    def omega(self) -> float:
        """theta / (1 - alpha)."""
        return self.theta / (1.0 - self.alpha)

    def moments(self) -> Moments:
        a = self.alpha
        if a == -math.inf:
            m = math.exp(-self.theta)
            return Moments(m, m)
        return Moments(self.omega ** (a - 1.0), self.omega ** (a - 2.0))

    def llt(self, lam: ArrayLike) -> ArrayLike:
        a, t = self.alpha, self.theta
        lam_arr = np.asarray(lam, dtype=float)
        if a == -math.inf:
            return math.exp(-t) * -np.expm1(-lam_arr)
        if a == 2.0:
            return -(t * lam_arr + 0.5 * lam_arr ** 2)
        ratio = lam_arr / t
        _check_lambda(ratio > -1.0, self, lam)
        if a == 0.0:
            return np.log1p(ratio)
        return (1.0 - a) / a * self.omega ** a * np.expm1(a * np.log1p(ratio))

    def sample(self, rng: np.random.Generator, size=None):
        a, t = self.alpha, self.theta
        if a == -math.inf:
            return rng.poisson(math.exp(-t), size)
        if a == 0.0:
            return rng.exponential(1.0 / t, size)
        if a < 0.0:
            # Poisson(rate) number of Gamma(-alpha, 1/theta) clusters
            rate = (1.0 - a) / (-a) * self.omega ** a
            n = rng.poisson(rate, size)
            shape = -a * np.maximum(n, 1)
            x = rng.gamma(shape, 1.0 / t)
            return np.where(n > 0, x, 0.0)
        raise UnsupportedOperationError(
            f"no direct sampler for tempered stable {self.label}; simulate it with processes.simulate_tweble_ou"
        )

    def frozen(self):
        if self.alpha == -math.inf:
            return stats.poisson(math.exp(-self.theta))
        if self.alpha == 0.0:
            return stats.expon(scale=1.0 / self.theta)
        if self.alpha == 2.0:
            return stats.norm(loc=-self.theta, scale=1.0)
        return super().frozen()


@dataclass(frozen=True)
class NegBin(FamilyParams):
    alpha: float
    p: float
    kind: ClassVar[FamilyKind] = FamilyKind.NEGBIN
    discrete: ClassVar[bool] = True

    def validate(self) -> None:
        _check_positive("NegBin alpha", self.alpha)
        _check_probability("NegBin p", self.p)

    @property
    def q(self) -> float:
        return 1.0 - self.p

    def moments(self) -> Moments:
        a, p, q = self.alpha, self.p, self.q
        return Moments(a * p / q, a * p / q ** 2)

    def llt(self, lam: ArrayLike) -> ArrayLike:
        lam_arr = np.asarray(lam, dtype=float)
        _check_lambda(lam_arr > math.log(self.p), self, lam)
        return self.alpha * np.log1p(-self.p * np.expm1(-lam_arr) / self.q)

    def pgf(self, z: ArrayLike) -> ArrayLike:
        _check_z(z)
        return (self.q / (1.0 - self.p * np.asarray(z, dtype=float))) ** self.alpha

    def pgf_series(self, order: int, shift: float = 0.0, scale: float = 1.0) -> PowerSeries:
        a, p = self.alpha, self.p
        base = 1.0 - p * shift
        rho = p * scale / base
        k = np.arange(order)
        log_c = a * math.log(self.q / base) + special.gammaln(k + a) - special.gammaln(a) - special.gammaln(k + 1)
        with np.errstate(divide="ignore"):
            log_c = log_c + k * np.log(rho) if rho > 0 else np.where(k == 0, log_c, -np.inf)
        return PowerSeries(np.exp(log_c))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.negative_binomial(self.alpha, self.q, size)

    def frozen(self):
        return stats.nbinom(self.alpha, self.q)


@dataclass(frozen=True)
class CPGeo(FamilyParams):
    """
    Compound Poisson-geometric: sum of N iid Poisson(alpha) counts with
    P(N = k) = q p^k, k >= 0.
    """

    alpha: float
    p: float
    kind: ClassVar[FamilyKind] = FamilyKind.CPGEO
    discrete: ClassVar[bool] = True

    def validate(self) -> None:
        _check_positive("CPGeo alpha", self.alpha)
        _check_probability("CPGeo p", self.p)

    @property
    def q(self) -> float:
        return 1.0 - self.p

    def moments(self) -> Moments:
        a, p, q = self.alpha, self.p, self.q
        return Moments(a * p / q, a * p * (a + q) / q ** 2)

    def llt(self, lam: ArrayLike) -> ArrayLike:
        lam_arr = np.asarray(lam, dtype=float)
        inner = np.expm1(self.alpha * np.expm1(-lam_arr))
        _check_lambda(1.0 - self.p * (1.0 + inner) > 0.0, self, lam)
        return np.log1p(-self.p * inner / self.q)

    def pgf(self, z: ArrayLike) -> ArrayLike:
        _check_z(z)
        zz = np.asarray(z, dtype=float)
        return self.q / (1.0 - self.p * np.exp(-self.alpha * (1.0 - zz)))

    def pgf_series(self, order: int, shift: float = 0.0, scale: float = 1.0) -> PowerSeries:
        # q / (1 - p e^{-alpha(1-shift)} e^{alpha*scale*z}); e^{cz} has coefficients c^k/k!
        a = self.alpha
        k = np.arange(order)
        with np.errstate(divide="ignore"):
            growth = np.exp(k * np.log(a * scale) - special.gammaln(k + 1)) if scale > 0 else (k == 0).astype(float)
        denom = -self.p * math.exp(-a * (1.0 - shift)) * growth
        denom[0] += 1.0
        return ps_div(PowerSeries.constant(self.q, order), PowerSeries(denom))

    def sample(self, rng: np.random.Generator, size=None):
        n = rng.geometric(self.q, size) - 1
        return rng.poisson(self.alpha * n)


@dataclass(frozen=True)
class PolyaAeppli(FamilyParams):
    """
    Poisson(alpha) number of geometric clusters G with P(G = k) = q p^(k-1), k >= 1.
    """

    alpha: float
    p: float
    kind: ClassVar[FamilyKind] = FamilyKind.POLYA_AEPPLI
    discrete: ClassVar[bool] = True

    def validate(self) -> None:
        _check_positive("Polya-Aeppli alpha", self.alpha)
        _check_probability("Polya-Aeppli p", self.p)

    @property
    def q(self) -> float:
        return 1.0 - self.p

    def moments(self) -> Moments:
        a, p, q = self.alpha, self.p, self.q
        return Moments(a / q, a * (1.0 + p) / q ** 2)

    def llt(self, lam: ArrayLike) -> ArrayLike:
        lam_arr = np.asarray(lam, dtype=float)
        _check_lambda(lam_arr > math.log(self.p), self, lam)
        return -self.alpha * np.expm1(-lam_arr) / (1.0 - self.p * np.exp(-lam_arr))

    def pgf(self, z: ArrayLike) -> ArrayLike:
        _check_z(z)
        zz = np.asarray(z, dtype=float)
        return np.exp(-self.alpha * (1.0 - zz) / (1.0 - self.p * zz))

    def pgf_series(self, order: int, shift: float = 0.0, scale: float = 1.0) -> PowerSeries:
        num = PowerSeries.from_coeffs([1.0 - shift, -scale], order)
        den = PowerSeries.from_coeffs([1.0 - self.p * shift, -self.p * scale], order)
        return ps_exp(ps_div(num, den) * -self.alpha)

    def pmf_closed_form(self, k: int) -> float:
        """Finite-sum pmf; the series coefficient is the reference."""
        a, p, q = self.alpha, self.p, self.q
        if k == 0:
            return math.exp(-a)
        total = 0.0
        for l in range(1, k + 1):
            total += math.comb(k - 1, l - 1) * a ** l / math.factorial(l) * p ** (k - l) * q ** l
        return math.exp(-a) * total

    def sample(self, rng: np.random.Generator, size=None):
        m = rng.poisson(self.alpha, size)
        extra = rng.negative_binomial(np.maximum(m, 1), self.q)
        return np.where(m > 0, m + extra, 0)


@dataclass(frozen=True)
class Gamma(FamilyParams):
    alpha: float
    beta: float
    kind: ClassVar[FamilyKind] = FamilyKind.GAMMA

    def validate(self) -> None:
        _check_positive("Gamma shape alpha", self.alpha)
        _check_positive("Gamma scale beta", self.beta)

    def moments(self) -> Moments:
        return Moments(self.alpha * self.beta, self.alpha * self.beta ** 2)

    def llt(self, lam: ArrayLike) -> ArrayLike:
        lam_arr = np.asarray(lam, dtype=float)
        _check_lambda(lam_arr * self.beta > -1.0, self, lam)
        return self.alpha * np.log1p(lam_arr * self.beta)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.alpha, self.beta, size)

    def frozen(self):
        return stats.gamma(a=self.alpha, scale=self.beta)


FAMILY_CLASSES = {
    FamilyKind.TWEBLE: TweBLE,
    FamilyKind.NEGBIN: NegBin,
    FamilyKind.CPGEO: CPGeo,
    FamilyKind.POLYA_AEPPLI: PolyaAeppli,
    FamilyKind.GAMMA: Gamma,
}

FAMILY_PARAMETERS = {
    FamilyKind.TWEBLE: ("alpha", "theta"),
    FamilyKind.NEGBIN: ("alpha", "p"),
    FamilyKind.CPGEO: ("alpha", "p"),
    FamilyKind.POLYA_AEPPLI: ("alpha", "p"),
    FamilyKind.GAMMA: ("alpha", "beta"),
}


def make_family(kind: Union[FamilyKind, str], **params: Any) -> FamilyParams:
    """Build a family from its kind and keyword parameters (q is accepted for p)."""
    try:
        kind = FamilyKind(kind)
    except ValueError:
        names = ", ".join(k.value for k in FamilyKind)
        raise DomainError(f"unknown family {kind!r}; choose one of {names}")

    params = {k: v for k, v in params.items() if v is not None}
    if "q" in params:
        if "p" in params:
            raise DomainError("give either p or q, not both")
        params["p"] = 1.0 - float(params.pop("q"))

    expected = FAMILY_PARAMETERS[kind]
    missing = [name for name in expected if name not in params]
    if missing:
        raise DomainError(f"{kind.value} needs parameter(s): {', '.join(missing)}")
    extra = sorted(set(params) - set(expected))
    if extra:
        raise DomainError(f"{kind.value} does not take parameter(s): {', '.join(extra)}")

    return FAMILY_CLASSES[kind](**{name: float(params[name]) for name in expected})


def moments(fam: FamilyParams) -> Moments:
    return fam.moments()


def llt(fam: FamilyParams, lam: ArrayLike) -> ArrayLike:
    return fam.llt(lam)


def plst(fam: FamilyParams, lam: ArrayLike) -> ArrayLike:
    return fam.plst(lam)


def pgf(fam: FamilyParams, z: ArrayLike) -> ArrayLike:
    return fam.pgf(z)


def pgf_series(fam: FamilyParams, order: int, shift: float = 0.0, scale: float = 1.0) -> PowerSeries:
    return fam.pgf_series(order, shift, scale)


def pmf(fam: FamilyParams, k: int, order: Optional[int] = None) -> float:
    return fam.pmf(k, order)


def pmf_array(fam: FamilyParams, order: int) -> np.ndarray:
    return fam.pmf_array(order)


def sample(fam: FamilyParams, rng: np.random.Generator, size=None):
    return fam.sample(rng, size)
