"""
Exact simulators for the processes whose limit laws are the families.

Paths are grouped into fixed-size blocks. Block ``i`` draws from its own
Philox stream keyed by (seed, stream_id, i), so the output depends on the
configuration only, never on the number of worker threads.
"""

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy import integrate, special

from .divisibility import levy_density
from .errors import ConfigurationError, DegenerateChainError, DomainError, InvalidClusterError
from .families import CPGeo, Gamma, Moments, TweBLE
from .series import PowerSeries

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int], None]

CLUSTER_NEG_TOL = 1e-12
CLUSTER_DEFICIT_TOL = 1e-8
MAX_DISCARDED_FRACTION = 0.05
QUAD_TOL = 1e-12


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    seed: int
    horizon: float = 15.0
    n_steps: int = 0
    burn_in: int = 1000
    stream_id: int = 0
    block_size: int = 8192
    workers: Optional[int] = None

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigurationError(f"n_paths must be >= 1, got {self.n_paths}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not (self.horizon >= 0.0 and math.isfinite(self.horizon)):
            raise ConfigurationError(f"horizon must be a finite number >= 0, got {self.horizon}")
        if self.n_steps < 0 or self.burn_in < 0:
            raise ConfigurationError("n_steps and burn_in must be >= 0")
        if self.stream_id < 0:
            raise ConfigurationError(f"stream_id must be >= 0, got {self.stream_id}")
        if self.block_size < 1:
            raise ConfigurationError(f"block_size must be >= 1, got {self.block_size}")
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")

    @property
    def n_blocks(self) -> int:
        return -(-self.n_paths // self.block_size)

    def block_sizes(self):
        full, rest = divmod(self.n_paths, self.block_size)
        return [self.block_size] * full + ([rest] if rest else [])

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class SimResult:
    terminal_samples: np.ndarray
    config: SimConfig
    event_counts: np.ndarray
    extras: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.terminal_samples) != self.config.n_paths:
            raise ValueError("terminal_samples length differs from n_paths")

    @property
    def n_paths(self) -> int:
        return self.config.n_paths


def block_generator(seed: int, stream_id: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream_id, block))))


def _worker_count(cfg: SimConfig) -> int:
    if cfg.workers is not None:
        return cfg.workers
    return min(cfg.n_blocks, os.cpu_count() or 1)


def _run_blocks(
    name: str,
    cfg: SimConfig,
    block_fn: Callable[[np.random.Generator, int], Tuple[np.ndarray, np.ndarray]],
    progress_callback: Optional[ProgressCallback] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    sizes = cfg.block_sizes()
    total = len(sizes)
    workers = _worker_count(cfg)
    started = time.perf_counter()
    logger.info("%s: %d paths in %d block(s) on %d worker(s)", name, cfg.n_paths, total, workers)

    results = [None] * total
    if workers == 1:
        for i, size in enumerate(sizes):
            results[i] = block_fn(block_generator(cfg.seed, cfg.stream_id, i), size)
            if progress_callback:
                progress_callback(i + 1, total)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(block_fn, block_generator(cfg.seed, cfg.stream_id, i), size): i
                for i, size in enumerate(sizes)
            }
            for done, future in enumerate(as_completed(futures), start=1):
                results[futures[future]] = future.result()
                if progress_callback:
                    progress_callback(done, total)

    samples = np.concatenate([r[0] for r in results])
    events = np.concatenate([r[1] for r in results])
    logger.info("%s: finished in %.2fs", name, time.perf_counter() - started)
    return samples, events


def simulate_disaster_chain(alpha: float, p: float, cfg: SimConfig,
                            progress_callback: Optional[ProgressCallback] = None) -> SimResult:
    """
    X_{n+1} = X_n + Poisson(alpha) with probability p, else 0 (a total
    disaster). Runs burn_in + n_steps steps from X_0 = 0; event counts are
    the number of disasters per path.
    """
    if p in (0.0, 1.0):
        raise DegenerateChainError(f"p={p} makes the disaster chain degenerate; need 0 < p < 1")
    target = CPGeo(alpha, p)
    steps = cfg.burn_in + cfg.n_steps

    def block(rng: np.random.Generator, size: int):
        x = np.zeros(size, dtype=np.int64)
        disasters = np.zeros(size, dtype=np.int64)
        for _ in range(steps):
            keep = rng.random(size) < p
            births = rng.poisson(alpha, size)
            x = np.where(keep, x + births, 0)
            disasters += ~keep
        return x, disasters

    samples, events = _run_blocks("disaster chain", cfg, block, progress_callback)
    m = target.moments()
    return SimResult(samples, cfg, events, {"steps": float(steps), "target_mean": m.mu, "target_variance": m.sigma2})


def cluster_pmf(h: Union[PowerSeries, np.ndarray]) -> np.ndarray:
    """Validated cluster-size pmf from the coefficients of h (h(0) = 0)."""
    coeffs = np.asarray(h.coeffs if isinstance(h, PowerSeries) else h, dtype=float)
    if coeffs.size < 2:
        raise InvalidClusterError("cluster pgf needs at least one positive size")
    if abs(coeffs[0]) > CLUSTER_NEG_TOL:
        raise InvalidClusterError(f"cluster pgf must have h(0) = 0, got {coeffs[0]:.3e}")
    worst = coeffs.min()
    if worst < -CLUSTER_NEG_TOL:
        k = int(np.argmin(coeffs))
        raise InvalidClusterError(f"cluster pgf has negative coefficient {worst:.3e} at index {k}")
    pmf = np.clip(coeffs, 0.0, None)
    pmf[0] = 0.0
    mass = pmf.sum()
    if abs(1.0 - mass) > CLUSTER_DEFICIT_TOL:
        raise InvalidClusterError(f"cluster pmf sums to {mass:.10f}; raise the truncation order")
    return pmf / mass


def geometric_cluster(q: float, order: Optional[int] = None) -> PowerSeries:
    """h(z) = q z / (1 - p z): P(size = k) = q p^(k-1), k >= 1."""
    if not 0.0 < q <= 1.0:
        raise DomainError(f"geometric cluster parameter q must lie in (0, 1], got {q!r}")
    p = 1.0 - q
    if order is None:
        order = 2 if p == 0.0 else max(16, int(math.ceil(math.log(1e-14) / math.log(p))) + 2)
    k = np.arange(order)
    coeffs = np.where(k >= 1, q * p ** np.maximum(k - 1, 0), 0.0)
    return PowerSeries(coeffs)


def simulate_death_immigration(rate: float, h: Union[PowerSeries, np.ndarray], cfg: SimConfig,
                               progress_callback: Optional[ProgressCallback] = None) -> SimResult:
    """
    Clusters immigrate at Poisson rate ``rate`` with sizes drawn from h; each
    individual dies at unit rate. The state at the horizon is sampled exactly:
    an immigrant arriving at s is alive at t with probability e^{-(t - s)}.
    """
    if not (rate > 0.0 and math.isfinite(rate)):
        raise DomainError(f"immigration rate must be a finite number > 0, got {rate!r}")
    pmf = cluster_pmf(h)
    t = cfg.horizon
    sizes = np.arange(pmf.size)

    def block(rng: np.random.Generator, size: int):
        arrivals = rng.poisson(rate * t, size)
        owner = np.repeat(np.arange(size), arrivals)
        epochs = rng.uniform(0.0, t, owner.size)
        cluster = rng.choice(sizes, size=owner.size, p=pmf)
        alive = rng.binomial(cluster, np.exp(-(t - epochs)))
        x = np.bincount(owner, weights=alive, minlength=size)
        return np.rint(x).astype(np.int64), arrivals

    samples, events = _run_blocks("death-immigration", cfg, block, progress_callback)
    return SimResult(samples, cfg, events, {
        "rate": rate,
        "cluster_mean": float(np.dot(sizes, pmf)),
        "zero_probability": transient_pgf_death_immigration(rate, pmf, t, 0.0),
    })


def _as_cluster_fn(h) -> Callable[[float], float]:
    if callable(h):
        return h
    coeffs = np.asarray(h.coeffs if isinstance(h, PowerSeries) else h, dtype=float)
    return lambda u: float(np.polynomial.polynomial.polyval(u, coeffs))


def _check_pgf_args(z: float, t: float) -> None:
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"z must lie in [0, 1], got {z!r}")
    if not t >= 0.0:
        raise DomainError(f"t must be >= 0, got {t!r}")


def transient_pgf_death_immigration(rate: float, h, t: float, z: float) -> float:
    """phi_t(z) = exp{-r integral_0^t [1 - h(1 - e^{-s}(1 - z))] ds}."""
    _check_pgf_args(z, t)
    if t == 0.0 or z == 1.0:
        return 1.0
    hf = _as_cluster_fn(h)
    val, _ = integrate.quad(lambda s: 1.0 - hf(1.0 - math.exp(-s) * (1.0 - z)), 0.0, t,
                            epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return math.exp(-rate * val)


def limit_pgf_death_immigration(rate: float, h, z: float) -> float:
    """phi_inf(z) = exp{-r integral_z^1 (1 - h(u)) / (1 - u) du}."""
    _check_pgf_args(z, 0.0)
    if z == 1.0:
        return 1.0
    hf = _as_cluster_fn(h)
    val, _ = integrate.quad(lambda u: (1.0 - hf(u)) / (1.0 - u), z, 1.0,
                            epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return math.exp(-rate * val)


def simulate_ou_compound_poisson(alpha: float, beta: float, cfg: SimConfig,
                                 progress_callback: Optional[ProgressCallback] = None) -> SimResult:
    """
    dX = -X dt + dL, X_0 = 0, with L compound Poisson of rate alpha and
    exponential jumps of mean beta; X_t = sum_i e^{-(t - s_i)} D_i exactly.
    """
    target = Gamma(alpha, beta)
    t = cfg.horizon

    def block(rng: np.random.Generator, size: int):
        jumps = rng.poisson(alpha * t, size)
        owner = np.repeat(np.arange(size), jumps)
        epochs = rng.uniform(0.0, t, owner.size)
        marks = rng.exponential(beta, owner.size)
        x = np.bincount(owner, weights=marks * np.exp(-(t - epochs)), minlength=size)
        return x, jumps

    samples, events = _run_blocks("ou-gamma", cfg, block, progress_callback)
    m = ou_transient_moments(target.moments(), t)
    return SimResult(samples, cfg, events, {
        "target_mean": m.mu,
        "target_variance": m.sigma2,
        "zero_jump_probability": math.exp(-alpha * t),
    })


def transient_plst_ou_gamma(alpha: float, beta: float, t: float, lam: float) -> float:
    """((1 + lambda beta) / (1 + lambda beta e^{-t}))^{-alpha}."""
    Gamma(alpha, beta)  # validates
    if not (lam >= 0.0 and t >= 0.0):
        raise DomainError(f"lambda and t must be >= 0, got lambda={lam!r}, t={t!r}")
    if math.isinf(t):
        return (1.0 + lam * beta) ** (-alpha)
    return ((1.0 + lam * beta) / (1.0 + lam * beta * math.exp(-t))) ** (-alpha)


def transient_plst_ou_quadrature(alpha: float, beta: float, t: float, lam: float) -> float:
    """exp{-alpha integral_0^t (1 - 1/(1 + lambda beta e^{-s})) ds}."""
    Gamma(alpha, beta)  # validates
    if not (lam >= 0.0 and t >= 0.0):
        raise DomainError(f"lambda and t must be >= 0, got lambda={lam!r}, t={t!r}")
    if t == 0.0 or lam == 0.0:
        return 1.0
    val, _ = integrate.quad(lambda s: 1.0 - 1.0 / (1.0 + lam * beta * math.exp(-s)), 0.0, t,
                            epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return math.exp(-alpha * val)


def ou_transient_moments(limit: Moments, t: float) -> Moments:
    """Mean and variance at time t of an OU process from 0 with the given stationary moments."""
    return Moments(limit.mu * -math.expm1(-t), limit.sigma2 * -math.expm1(-2.0 * t))


@dataclass(frozen=True)
class TruncatedDriver:
    """Compound-Poisson part (jumps > eps) of the TweBLE background driver."""

    alpha: float
    theta: float
    eps: float
    rate_pareto: float
    rate_gamma: float
    discarded_mean: float

    @property
    def rate(self) -> float:
        return self.rate_pareto + self.rate_gamma

    def sample_jumps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a, th, eps = self.alpha, self.theta, self.eps
        out = np.empty(n)
        from_pareto = rng.random(n) < self.rate_pareto / self.rate

        # x^-(a+1) e^{-theta x} on (eps, inf): Pareto proposal, accept w.p. e^{-theta (x - eps)}
        idx = np.flatnonzero(from_pareto)
        while idx.size:
            x = eps * rng.random(idx.size) ** (-1.0 / a)
            ok = rng.random(idx.size) < np.exp(-th * (x - eps))
            out[idx[ok]] = x[ok]
            idx = idx[~ok]

        # x^-a e^{-theta x} on (eps, inf): Gamma(1 - a) conditioned above eps
        idx = np.flatnonzero(~from_pareto)
        while idx.size:
            x = rng.gamma(1.0 - a, 1.0 / th, idx.size)
            ok = x > eps
            out[idx[ok]] = x[ok]
            idx = idx[~ok]
        return out


def tweble_driver(alpha: float, theta: float, eps: float) -> TruncatedDriver:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"TweBLE-OU simulation needs 0 < alpha < 1, got {alpha!r}")
    TweBLE(alpha, theta)  # validates
    if not eps > 0.0:
        raise ConfigurationError(f"jump cutoff eps must be > 0, got {eps!r}")

    c = (1.0 - alpha) ** (1.0 - alpha) / special.gamma(1.0 - alpha)

    def tail(f):
        head, _ = integrate.quad(f, eps, max(eps, 1.0), limit=200)
        rest, _ = integrate.quad(f, max(eps, 1.0), math.inf, limit=200)
        return head + rest

    rate_pareto = tail(lambda x: c * alpha * x ** (-alpha - 1.0) * math.exp(-theta * x))
    rate_gamma = tail(lambda x: c * theta * x ** (-alpha) * math.exp(-theta * x))
    discarded, _ = integrate.quad(lambda x: x * levy_density(alpha, theta, x), 0.0, eps, limit=200)
    return TruncatedDriver(alpha, theta, eps, rate_pareto, rate_gamma, float(discarded))


def simulate_tweble_ou(alpha: float, theta: float, cfg: SimConfig, eps: float = 1e-4,
                       progress_callback: Optional[ProgressCallback] = None) -> SimResult:
    """
    OU process whose stationary law is TweBLE(alpha, theta), alpha in (0, 1).

    The driver keeps only jumps larger than ``eps``; the discarded small-jump
    mean per unit time is reported and bounds the bias of the terminal mean.
    """
    driver = tweble_driver(alpha, theta, eps)
    target = TweBLE(alpha, theta).moments()
    fraction = driver.discarded_mean / target.mu
    if fraction > MAX_DISCARDED_FRACTION:
        raise ConfigurationError(
            f"jump cutoff eps={eps:g} discards {fraction:.2%} of the mean "
            f"(limit {MAX_DISCARDED_FRACTION:.0%}); use a smaller eps"
        )
    t = cfg.horizon

    def block(rng: np.random.Generator, size: int):
        jumps = rng.poisson(driver.rate * t, size)
        owner = np.repeat(np.arange(size), jumps)
        epochs = rng.uniform(0.0, t, owner.size)
        marks = driver.sample_jumps(rng, owner.size)
        x = np.bincount(owner, weights=marks * np.exp(-(t - epochs)), minlength=size)
        return x, jumps

    samples, events = _run_blocks("tweble-ou", cfg, block, progress_callback)
    m = ou_transient_moments(target, t)
    decay = -math.expm1(-t)
    return SimResult(samples, cfg, events, {
        "target_mean": m.mu,
        "target_variance": m.sigma2,
        "jump_rate": driver.rate,
        "discarded_mean": driver.discarded_mean,
        "discarded_fraction": fraction,
        "bias_bound": driver.discarded_mean * decay,
    })


def thin(samples: np.ndarray, c: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli thinning c o X of integer samples."""
    if not 0.0 <= c <= 1.0:
        raise DomainError(f"c must lie in [0, 1], got {c!r}")
    x = np.asarray(samples)
    if not np.issubdtype(x.dtype, np.integer) or np.any(x < 0):
        raise DomainError("thinning needs nonnegative integer samples")
    return rng.binomial(x, c)
