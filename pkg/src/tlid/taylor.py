"""
Taylor's-law exponents, branch structure and the variance-rescaling transform.

A family template fixes one parameter of a family and frees the other. The
free parameter's divergence value (mean equal to 1) splits the template into
a lower and an upper branch; its zero value (variance equal to 1) is where
b crosses 0. All logarithms are natural.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from .errors import (
    DomainError, EmptyInputError, NoSolutionError, SingularMeanError, UnsupportedOperationError,
)
from .families import (
    FAMILY_PARAMETERS, CPGeo, FamilyKind, FamilyParams, Gamma, Moments, NegBin, PolyaAeppli,
    TweBLE, TWEBLE_ALPHA_MIN, make_family,
)

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12
ISO_B_TOL = 1e-10
BMIN_XATOL = 1e-10
# upper end of the -log q search window for b_min; q = e^-200 is still a normal double
BMIN_LOG_Q_MAX = 200.0
SCAN_POINTS = 4001
# a fixed parameter this close to 1 is treated as exactly 1
UNIT_RTOL = 1e-12
# offsets from a divergence point, relative to max(1, |value|), added to the scan grid
NEAR_DIVERGENCE = np.geomspace(1e-14, 1e-2, 240)


class Branch(str, Enum):
    LOWER = "LowerBranch"
    UPPER = "UpperBranch"
    FIXED_POINT = "FixedPoint"
    SINGULAR = "Singular"


DEFAULT_FREE = {
    FamilyKind.TWEBLE: "alpha",
    FamilyKind.NEGBIN: "p",
    FamilyKind.CPGEO: "q",
    FamilyKind.POLYA_AEPPLI: "q",
    FamilyKind.GAMMA: "alpha",
}

# (lo, hi) of b that no member of the template reaches
KNOWN_EXCLUSIONS = {
    FamilyKind.TWEBLE: (0.0, 1.0),
    FamilyKind.CPGEO: (1.0, 2.0),
}


@dataclass(frozen=True)
class TLReport:
    b: float
    a: float
    branch: Branch
    critical: Dict[str, float]
    mu: float
    sigma2: float


@dataclass(frozen=True)
class FamilyTemplate:
    kind: FamilyKind
    free: str
    fixed: Tuple[Tuple[str, float], ...]

    @classmethod
    def of(cls, kind: Union[FamilyKind, str], free: Optional[str] = None, **fixed: float) -> 'FamilyTemplate':
        try:
            kind = FamilyKind(kind)
        except ValueError:
            raise DomainError(f"unknown family {kind!r}")
        free = free or DEFAULT_FREE[kind]

        names = FAMILY_PARAMETERS[kind]
        allowed = set(names) | ({"q"} if "p" in names else set())
        if free not in allowed:
            raise DomainError(f"{kind.value} has no parameter {free!r}; free parameter must be one of {sorted(allowed)}")

        fixed = {k: float(v) for k, v in fixed.items() if v is not None}
        if "q" in fixed:
            fixed["p"] = 1.0 - fixed.pop("q")
        free_native = "p" if free == "q" else free
        needed = [n for n in names if n != free_native]
        if sorted(fixed) != sorted(needed):
            raise DomainError(
                f"{kind.value} template with free {free!r} needs exactly the fixed parameter(s) {needed}, got {sorted(fixed)}"
            )
        template = cls(kind, free, tuple(sorted(fixed.items())))
        template._check_fixed()
        return template

    @classmethod
    def for_family(cls, fam: FamilyParams, free: Optional[str] = None) -> 'FamilyTemplate':
        free = free or DEFAULT_FREE[fam.kind]
        free_native = "p" if free == "q" else free
        fixed = {k: v for k, v in fam.params().items() if k != free_native}
        return cls.of(fam.kind, free, **fixed)

    @property
    def fixed_params(self) -> Dict[str, float]:
        return dict(self.fixed)

    @property
    def label(self) -> str:
        fixed = ", ".join(f"{k}={v:g}" for k, v in self.fixed)
        return f"{self.kind.value}[{self.free} free; {fixed}]"

    def _check_fixed(self) -> None:
        lo, hi = self.bounds()
        probe = 0.5 * (lo + hi) if math.isfinite(hi - lo) else (1.0 if lo >= 0 else -1.0)
        if self.kind is FamilyKind.TWEBLE and self.free == "alpha":
            probe = 0.0
        self.family_at(probe)

    def bounds(self) -> Tuple[float, float]:
        """Open interval of admissible free-parameter values."""
        if self.free in ("p", "q"):
            return 0.0, 1.0
        if self.kind is FamilyKind.TWEBLE:
            if self.free == "alpha":
                return TWEBLE_ALPHA_MIN, 2.0
            alpha = self.fixed_params["alpha"]
            return (0.0, math.inf) if alpha < 1.0 else (-math.inf, 0.0)
        return 0.0, math.inf

    def family_at(self, value: float) -> FamilyParams:
        params = self.fixed_params
        if self.kind is FamilyKind.TWEBLE and self.free == "alpha":
            # theta keeps its magnitude and takes the sign the alpha range admits
            params["theta"] = abs(params["theta"]) if value < 1.0 else -abs(params["theta"])
        params[self.free] = value
        return make_family(self.kind, **params)

    def value_of(self, fam: FamilyParams) -> float:
        if self.free == "q":
            return fam.q
        return getattr(fam, self.free)

    def constant_b(self) -> Optional[float]:
        """b when it does not depend on the free parameter, else None."""
        fixed = self.fixed_params
        if self.kind is FamilyKind.GAMMA:
            if self.free == "alpha" and _is_unit(fixed["beta"]):
                return 1.0
            if self.free == "beta" and _is_unit(fixed["alpha"]):
                return 2.0
        if self.kind is FamilyKind.TWEBLE and self.free == "theta":
            return tl_exponent(self.family_at(1.0 if fixed["alpha"] < 1.0 else -1.0))
        return None


def _is_unit(x: float) -> bool:
    return math.isclose(x, 1.0, rel_tol=UNIT_RTOL)


def _log_moments(m: Moments) -> Tuple[float, float]:
    return math.log(m.mu), math.log(m.sigma2)


def tl_exponent(fam: FamilyParams) -> float:
    """Closed-form exponent b with log sigma2 = b log mu at this parameter point."""
    if isinstance(fam, TweBLE):
        if fam.alpha == -math.inf:
            return 1.0
        return (2.0 - fam.alpha) / (1.0 - fam.alpha)

    log_mu, log_s2 = _log_moments(fam.moments())
    if abs(log_mu) < SINGULAR_TOL:
        if abs(log_s2) >= SINGULAR_TOL:
            raise SingularMeanError(f"mean of {fam.label} is 1 while the variance is not; b is undefined here")
        if isinstance(fam, Gamma) and _is_unit(fam.beta):
            return 1.0
        raise SingularMeanError(f"mean and variance of {fam.label} are both 1; b is undefined here")

    if isinstance(fam, NegBin):
        return 1.0 - math.log(fam.q) / log_mu
    if isinstance(fam, CPGeo):
        return 1.0 + math.log1p(fam.alpha / fam.q) / log_mu
    if isinstance(fam, PolyaAeppli):
        return 1.0 + math.log((1.0 + fam.p) / fam.q) / log_mu
    if isinstance(fam, Gamma):
        return 1.0 + math.log(fam.beta) / log_mu
    return log_s2 / log_mu


def _is_singular(m: Moments) -> bool:
    log_mu, log_s2 = _log_moments(m)
    return abs(log_mu) < SINGULAR_TOL and abs(log_s2) >= SINGULAR_TOL


def _quadratic_root(a: float, b: float, c: float) -> float:
    """Positive root of a x^2 + b x + c with c < 0 < a."""
    return (-b + math.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)


def _negbin_b_min(alpha: float) -> Tuple[float, float, bool]:
    """Infimum of b over the upper branch, with its location in q."""
    log_alpha = math.log(alpha)

    def b_of_u(u: float) -> float:
        # u = -log q; log mu = log alpha + log p - log q
        return 1.0 + u / (log_alpha + math.log(-math.expm1(-u)) + u)

    u_c = -math.log(alpha / (1.0 + alpha))
    res = optimize.minimize_scalar(
        b_of_u, bounds=(u_c + 1e-6, BMIN_LOG_Q_MAX), method="bounded", options={"xatol": BMIN_XATOL}
    )
    u_star = float(res.x)
    if BMIN_LOG_Q_MAX - u_star < 1e-3 or float(res.fun) >= 2.0:
        # b decreases towards 2 as p -> 1 and the infimum is not reached
        return 2.0, 0.0, False
    return float(res.fun), math.exp(-u_star), True


def critical_points(template: FamilyTemplate) -> Dict[str, float]:
    """Divergence (``<free>_c``) and zero (``<free>_0``) values of the free parameter, plus b_min for NegBin."""
    kind, free, fixed = template.kind, template.free, template.fixed_params
    out: Dict[str, float] = {}

    if free in ("p", "q"):
        alpha = fixed["alpha"]
        q_c: Optional[float] = None
        q_0: Optional[float] = None
        if kind is FamilyKind.NEGBIN:
            q_c = alpha / (1.0 + alpha)
            q_0 = _quadratic_root(1.0, alpha, -alpha)
        elif kind is FamilyKind.CPGEO:
            q_c = alpha / (1.0 + alpha)
            q_0 = _quadratic_root(1.0 + alpha, -alpha * (1.0 - alpha), -alpha * alpha)
        elif kind is FamilyKind.POLYA_AEPPLI:
            if alpha < 1.0:
                q_c = alpha
                q_0 = _quadratic_root(1.0, alpha, -2.0 * alpha)

        def named(q: float) -> float:
            return q if free == "q" else 1.0 - q

        if q_c is not None:
            out[f"{free}_c"] = named(q_c)
        if q_0 is not None:
            out[f"{free}_0"] = named(q_0)
        if kind is FamilyKind.NEGBIN:
            b_min, q_star, attained = _negbin_b_min(alpha)
            out["b_min"] = b_min
            out["b_min_attained"] = attained
            if attained:
                out[f"{free}_bmin"] = named(q_star)
        return out

    if free == "alpha":
        if kind is FamilyKind.TWEBLE:
            return {"alpha_c": 1.0, "alpha_0": 2.0}
        if kind is FamilyKind.GAMMA:
            beta = fixed["beta"]
            if _is_unit(beta):
                return {}
            return {"alpha_c": 1.0 / beta, "alpha_0": 1.0 / beta ** 2}
        p = fixed["p"]
        q = 1.0 - p
        if kind is FamilyKind.NEGBIN:
            return {"alpha_c": q / p, "alpha_0": q * q / p}
        if kind is FamilyKind.CPGEO:
            return {"alpha_c": q / p, "alpha_0": _quadratic_root(p, p * q, -q * q)}
        if kind is FamilyKind.POLYA_AEPPLI:
            return {"alpha_c": q, "alpha_0": q * q / (1.0 + p)}

    if free == "beta":
        alpha = fixed["alpha"]
        if _is_unit(alpha):
            return {}
        return {"beta_c": 1.0 / alpha, "beta_0": 1.0 / math.sqrt(alpha)}

    return out


def _divergence_value(template: FamilyTemplate, critical: Dict[str, float]) -> Optional[float]:
    return critical.get(f"{template.free}_c")


def branch_of(template: FamilyTemplate, value: float, critical: Optional[Dict[str, float]] = None) -> Branch:
    if template.constant_b() is not None:
        return Branch.FIXED_POINT
    if critical is None:
        critical = critical_points(template)
    if _is_singular(template.family_at(value).moments()):
        return Branch.SINGULAR
    crit = _divergence_value(template, critical)
    if crit is None or value < crit:
        return Branch.LOWER
    return Branch.UPPER


def tl_report(fam: FamilyParams, template: Optional[FamilyTemplate] = None, sigma1sq: float = 1.0) -> TLReport:
    """
    Exponent and branch of one law. ``a`` is 0 under the pointwise
    convention and log(sigma1sq) for the rescaled law.
    """
    if not sigma1sq > 0.0:
        raise DomainError(f"sigma1sq must be > 0, got {sigma1sq!r}")
    template = template or FamilyTemplate.for_family(fam)
    critical = critical_points(template)
    m = fam.moments()
    branch = branch_of(template, template.value_of(fam), critical)
    b = math.nan if branch is Branch.SINGULAR else tl_exponent(fam)
    return TLReport(
        b=b,
        a=math.log(sigma1sq),
        branch=branch,
        critical=critical,
        mu=m.mu,
        sigma2=sigma1sq * m.sigma2,
    )


@dataclass(frozen=True)
class CurveRow:
    param: float
    mu: float
    sigma2: float
    b: float
    branch: Branch
    excluded: bool = False


@dataclass(frozen=True)
class SingularPoint:
    name: str
    value: float
    left_sign: int
    right_sign: int


@dataclass(frozen=True)
class BCurve:
    template: FamilyTemplate
    rows: List[CurveRow]
    singularities: List[SingularPoint]
    critical: Dict[str, float] = field(default_factory=dict)


def _sign_near(template: FamilyTemplate, x: float) -> int:
    lo, hi = template.bounds()
    if not (lo < x < hi) and not (template.kind is FamilyKind.TWEBLE and x == hi):
        return 0
    try:
        return int(np.sign(tl_exponent(template.family_at(x))))
    except (DomainError, SingularMeanError):
        return 0


def b_curve(template: FamilyTemplate, sweep: Iterable[float]) -> BCurve:
    values = [float(x) for x in sweep]
    if not values:
        raise EmptyInputError("b_curve needs a non-empty sweep of the free parameter")

    critical = critical_points(template)
    rows: List[CurveRow] = []
    for x in values:
        fam = template.family_at(x)
        m = fam.moments()
        branch = branch_of(template, x, critical)
        if branch is Branch.SINGULAR:
            rows.append(CurveRow(x, m.mu, m.sigma2, math.nan, branch, excluded=True))
            continue
        rows.append(CurveRow(x, m.mu, m.sigma2, tl_exponent(fam), branch))

    singularities = []
    crit = _divergence_value(template, critical)
    if crit is not None and min(values) <= crit <= max(values):
        delta = 1e-6 * max(1.0, abs(crit))
        singularities.append(SingularPoint(
            name=f"{template.free}_c",
            value=crit,
            left_sign=_sign_near(template, crit - delta),
            right_sign=_sign_near(template, crit + delta),
        ))
    n_excluded = sum(r.excluded for r in rows)
    if n_excluded:
        logger.info("b_curve %s: %d singular grid point(s) excluded", template.label, n_excluded)
    return BCurve(template, rows, singularities, critical)


@dataclass(frozen=True)
class IsoBSolution:
    template: FamilyTemplate
    b_target: float
    values: Tuple[float, ...]
    fixed_point: bool = False

    @property
    def value(self) -> Optional[float]:
        return self.values[0] if self.values else None


def _branch_interval(template: FamilyTemplate, branch: Branch, critical: Dict[str, float]) -> Tuple[float, float]:
    lo, hi = template.bounds()
    crit = _divergence_value(template, critical)
    if crit is None:
        if branch is Branch.UPPER:
            return math.nan, math.nan
        return lo, hi
    return (lo, crit) if branch is Branch.LOWER else (crit, hi)


def _scan_grid(lo: float, hi: float) -> np.ndarray:
    if math.isfinite(lo) and math.isfinite(hi):
        if lo >= 0.0 and hi <= 1.0:
            # logit spacing resolves both ends of a probability interval
            lo_l = math.log(lo / (1 - lo)) if lo > 0 else -35.0
            hi_l = math.log(hi / (1 - hi)) if hi < 1 else 35.0
            grid = 1.0 / (1.0 + np.exp(-np.linspace(lo_l, hi_l, SCAN_POINTS)))
        else:
            grid = np.linspace(lo, hi, SCAN_POINTS)
    else:
        sign = 1.0 if lo >= 0.0 else -1.0
        a, b = (lo, hi) if sign > 0 else (-hi, -lo)
        a = max(a, 1e-10)
        b = min(b, 1e10)
        grid = sign * np.geomspace(a, b, SCAN_POINTS)
        grid.sort()
    span = hi - lo if math.isfinite(hi - lo) else 1.0
    pad = 1e-9 * max(1.0, span)
    return grid[(grid > lo + pad) & (grid < hi - pad)] if grid.size else grid


def _near_divergence(crit: float, lo: float, hi: float) -> np.ndarray:
    """Points closing in on ``crit`` from both sides, where b runs off to +-inf."""
    offsets = max(1.0, abs(crit)) * NEAR_DIVERGENCE
    pts = np.concatenate([crit - offsets, crit + offsets])
    return pts[(pts > lo) & (pts < hi)]


def _b_or_nan(template: FamilyTemplate, x: float) -> float:
    try:
        return tl_exponent(template.family_at(x))
    except (DomainError, SingularMeanError):
        return math.nan


def _polish(f, x: float, steps: int = 8) -> float:
    """Best neighbouring double of a bracketed root; b is steep near a divergence."""
    best, best_err = x, abs(f(x))
    for direction in (-math.inf, math.inf):
        y = x
        for _ in range(steps):
            y = float(np.nextafter(y, direction))
            err = abs(f(y))
            if err < best_err:
                best, best_err = y, err
    return best


def _is_unreached_b_min(template: FamilyTemplate, critical: Dict[str, float], b_target: float) -> bool:
    return ("b_min" in critical and not critical["b_min_attained"]
            and abs(b_target - critical["b_min"]) <= ISO_B_TOL)


def _negbin_b_min_root(template: FamilyTemplate, critical: Dict[str, float], b_target: float,
                       branches: Sequence[Branch]) -> List[float]:
    # b touches b_min without changing sign, so the scan cannot bracket it
    key = f"{template.free}_bmin"
    if Branch.UPPER not in branches or key not in critical:
        return []
    if abs(b_target - critical["b_min"]) > ISO_B_TOL:
        return []
    return [float(critical[key])]


def solve_iso_b(template: FamilyTemplate, b_target: float,
                branch: Optional[Union[Branch, str]] = None) -> IsoBSolution:
    """
    Free-parameter values with tl_exponent equal to ``b_target``.

    Each branch is scanned and sign changes are refined with Brent's method.
    ``branch=None`` searches both branches.
    """
    const = template.constant_b()
    if const is not None:
        if abs(const - b_target) <= ISO_B_TOL:
            return IsoBSolution(template, b_target, (), fixed_point=True)
        raise NoSolutionError(f"b is constant {const:g} on {template.label}; b={b_target:g} is never attained")

    critical = critical_points(template)
    branches = [Branch(branch)] if branch is not None else [Branch.LOWER, Branch.UPPER]
    roots: List[float] = []
    observed: List[float] = []

    def f(x: float) -> float:
        return _b_or_nan(template, x) - b_target

    for br in branches:
        lo, hi = _branch_interval(template, br, critical)
        if math.isnan(lo):
            continue
        grid = _scan_grid(lo, hi)
        crit = _divergence_value(template, critical)
        if crit is not None:
            grid = np.union1d(grid, _near_divergence(crit, lo, hi))
        if template.kind is FamilyKind.TWEBLE and template.free == "alpha" and br is Branch.UPPER:
            grid = np.append(grid, hi)
        vals = np.array([f(x) for x in grid])
        observed.extend((vals[np.isfinite(vals)] + b_target).tolist())
        for i, (x, v) in enumerate(zip(grid, vals)):
            if v == 0.0:
                roots.append(float(x))
            elif i + 1 < len(grid) and np.isfinite(v) and np.isfinite(vals[i + 1]) and v * vals[i + 1] < 0:
                root = _polish(f, optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-15, maxiter=200))
                if abs(f(root)) <= ISO_B_TOL:
                    roots.append(float(root))

    roots.extend(_negbin_b_min_root(template, critical, b_target, branches))

    if not roots:
        excluded = None
        if template.kind in KNOWN_EXCLUSIONS:
            excluded = KNOWN_EXCLUSIONS[template.kind]
        elif template.kind is FamilyKind.NEGBIN and template.free in ("p", "q"):
            excluded = (1.0, critical["b_min"])
        if excluded is not None and not (excluded[0] < b_target < excluded[1]):
            excluded = None
        where = f"branch {branches[0].value}" if len(branches) == 1 else "either branch"
        msg = f"b={b_target:g} is not attained on {where} of {template.label}"
        if _is_unreached_b_min(template, critical, b_target):
            excluded = (1.0, critical["b_min"])
            msg += (f"; b_min={critical['b_min']:g} is an infimum the upper branch approaches as "
                    f"{template.free} -> {1.0 if template.free == 'p' else 0.0:g} but never attains")
        elif excluded is not None:
            msg += f"; the range ({excluded[0]:g}, {excluded[1]:g}) is excluded"
        elif observed:
            msg += f"; scanned b lies in [{min(observed):g}, {max(observed):g}]"
        raise NoSolutionError(msg, excluded=excluded)

    roots = sorted(set(roots))
    logger.debug("solve_iso_b %s b=%g: %s", template.label, b_target, roots)
    return IsoBSolution(template, b_target, tuple(roots))


@dataclass(frozen=True)
class RescaledLaw:
    """The law with log-Laplace transform L(sigma1sq * lambda) / sigma1sq."""

    base: FamilyParams
    sigma1sq: float
    mu: float
    sigma2: float
    a: float
    b: float
    family: Optional[FamilyParams] = None
    support_step: Optional[float] = None

    @property
    def moments(self) -> Moments:
        return Moments(self.mu, self.sigma2)


def rescale(fam: FamilyParams, sigma1sq: float) -> RescaledLaw:
    if not (sigma1sq > 0.0 and math.isfinite(sigma1sq)):
        raise DomainError(f"sigma1sq must be a finite number > 0, got {sigma1sq!r}")
    m = fam.moments()
    try:
        b = tl_exponent(fam)
    except SingularMeanError:
        b = math.nan
    family = None
    if isinstance(fam, Gamma):
        family = Gamma(fam.alpha / sigma1sq, fam.beta * sigma1sq)
    return RescaledLaw(
        base=fam,
        sigma1sq=sigma1sq,
        mu=m.mu,
        sigma2=sigma1sq * m.sigma2,
        a=math.log(sigma1sq),
        b=b,
        family=family,
        support_step=sigma1sq if fam.discrete else None,
    )


def rescaled_llt(fam: FamilyParams, sigma1sq: float, lam):
    if not sigma1sq > 0.0:
        raise DomainError(f"sigma1sq must be > 0, got {sigma1sq!r}")
    return fam.llt(sigma1sq * np.asarray(lam, dtype=float)) / sigma1sq


def iid_summand(fam: FamilyParams, n: int) -> FamilyParams:
    """The law whose n-fold convolution is ``fam``."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    if n == 1:
        return fam
    if isinstance(fam, (NegBin, Gamma, PolyaAeppli)):
        return fam.with_params(alpha=fam.alpha / n)
    raise UnsupportedOperationError(f"{fam.label} has no closed-form n-th convolution root inside its family")


def tl_coefficient_iid(A: float, b: float, n: int) -> float:
    """TL coefficient of each of n iid summands of a law with sigma2 = A mu^b."""
    return A * n ** (b - 1.0)


def tl_coefficient_thinned(A: float, b: float, c: float) -> float:
    """TL coefficient of X_c in X = cX + X_c when Var X_c = (1 - c^2) Var X."""
    if not 0.0 < c < 1.0:
        raise DomainError(f"c must lie in (0, 1), got {c!r}")
    return A * (1.0 - c * c) * (1.0 - c) ** (-b)


@dataclass(frozen=True)
class UnitAlphaComparison:
    q: float
    b_formula: float
    b_prose: float

    @property
    def difference(self) -> float:
        return self.b_formula - self.b_prose


def polya_aeppli_unit_alpha_comparison(q_grid: Sequence[float]) -> List[UnitAlphaComparison]:
    """Polya-Aeppli(alpha=1) exponent against the alternative reading b = log(2 - q)."""
    rows = []
    for q in q_grid:
        fam = PolyaAeppli(1.0, 1.0 - q)
        rows.append(UnitAlphaComparison(q, tl_exponent(fam), math.log(2.0 - q)))
    return rows
