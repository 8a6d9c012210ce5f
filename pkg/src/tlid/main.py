#!/usr/bin/env python3

import argparse
import json
import logging
import math
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .config import get_config
from .divisibility import (
    Verdict, canonical_pgf_series, gamma_phi0, sd_canonical, tweble_sd_analysis,
)
from .errors import ConfigurationError, DomainError, NotSelfDecomposableError, TlidError
from .families import FamilyKind, FamilyParams, Gamma, TweBLE, make_family
from .mcstats import (
    choose_cutoff, empirical_moments, fit_taylor, histogram, ks_distance, pmf_distance, zero_fraction,
)
from .output import (
    CURVE_COLUMNS, FIT_COLUMNS, SAMPLE_COLUMNS, RunManifest, read_csv_columns, write_csv, write_json,
)
from .processes import (
    SimConfig, SimResult, geometric_cluster, simulate_death_immigration, simulate_disaster_chain,
    simulate_ou_compound_poisson, simulate_tweble_ou,
)
from .series import PowerSeries
from .taylor import DEFAULT_FREE, FamilyTemplate, b_curve, rescale, tl_report
from .ui import TlidConsole

FAMILY_FLAGS = ("alpha", "theta", "p", "q", "beta")
PROCESSES = ("disaster", "death-immigration", "ou-gamma", "ou-tweble")
# keys a --config file may set, beyond the settings in tlid.config
EXTRA_CONFIG_KEYS = {"paths", "stream_id", "no_log_file"}
MAX_PMF_ORDER = 8192

logger = logging.getLogger("tlid")


def setup_logging(log_dir: str, level: str = "INFO", to_file: bool = True) -> Optional[Path]:
    numeric = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric, int):
        raise ConfigurationError(f"unknown log level {level!r}")
    if not to_file:
        logger.setLevel(numeric)
        return None

    path = Path(log_dir).expanduser()
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"cannot create log directory {path}: {e}")

    log_file = path / f"tlid_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"

    logging.basicConfig(
        filename=str(log_file),
        level=numeric,
        format='[%(asctime)s] %(levelname)s  %(name)s  %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        force=True,
    )
    logger.setLevel(numeric)
    logger.info(f"TLID v{__version__} started")
    return log_file


def _parse_sweep(spec: str) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in spec:
            start, stop, num = spec.split(":")
            n = int(num)
            if n < 1:
                raise ValueError
            return np.linspace(float(start), float(stop), n)
        return np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError:
        raise DomainError(f"--sweep {spec!r} must be start:stop:num or a comma-separated list of numbers")


def _parse_cluster(spec: str, order: int) -> PowerSeries:
    kind, _, value = spec.partition(":")
    if kind != "geometric" or not value:
        raise DomainError(f"--cluster {spec!r} must look like geometric:Q with Q in (0, 1]")
    try:
        q = float(value)
    except ValueError:
        raise DomainError(f"--cluster {spec!r}: {value!r} is not a number")
    h = geometric_cluster(q)
    return h if h.order >= order else geometric_cluster(q, order)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="flat key/value TOML file with flag defaults")
    common.add_argument("--log-dir", metavar="DIR", help="log directory (default ~/.tlid/logs or $TLID_LOG_DIR)")
    common.add_argument("--log-level", metavar="LEVEL")
    common.add_argument("--no-log-file", action="store_true", help="do not write a log file")
    common.add_argument("--threads", type=int, metavar="N", help="simulation worker threads (default $TLID_THREADS)")
    common.add_argument("--pretty", action="store_true", help="also render tables on stderr")
    common.add_argument("--progress", action="store_true", help="show a progress bar while simulating")

    family = argparse.ArgumentParser(add_help=False)
    family.add_argument("--family", choices=[k.value for k in FamilyKind])
    family.add_argument("--alpha", type=float, help="use --alpha=-inf for the TweBLE Poisson limit")
    family.add_argument("--theta", type=float)
    family.add_argument("--p", type=float)
    family.add_argument("--q", type=float)
    family.add_argument("--beta", type=float)

    series = argparse.ArgumentParser(add_help=False)
    series.add_argument("--order", type=int, help="series truncation order")
    series.add_argument("--tol", type=float, help="coefficient negativity tolerance")

    parser = argparse.ArgumentParser(
        prog="tlid",
        description="Taylor's law, self-decomposability and limit-process simulation "
                    "for five infinitely divisible families",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("moments", parents=[common, family], help="mean, variance and TL exponent of one law")
    p.add_argument("--free", help="free parameter used for the branch label")
    p.add_argument("--rescale", type=float, default=1.0, metavar="SIGMA1SQ", help="variance rescaling factor")

    p = sub.add_parser("curve", parents=[common, family], help="b against a swept parameter (CSV)")
    p.add_argument("--free", help="parameter to sweep (default per family)")
    p.add_argument("--sweep", required=True, metavar="SPEC", help="start:stop:num or v1,v2,... (use --sweep=-1,... for negatives)")
    p.add_argument("--output", metavar="FILE", help="write the CSV here instead of stdout")

    p = sub.add_parser("sd-check", parents=[common, family, series], help="self-decomposability oracle")

    p = sub.add_parser("simulate", parents=[common, family, series], help="simulate a limit process")
    p.add_argument("--process", required=True, choices=PROCESSES)
    p.add_argument("--seed", required=True, type=int, help="64-bit seed (mandatory)")
    p.add_argument("--stream-id", type=int, default=0)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--horizon", type=float, help="continuous-time horizon t")
    p.add_argument("--steps", type=int, default=0, help="disaster chain steps after burn-in")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--block-size", type=int)
    p.add_argument("--eps", type=float, help="TweBLE-OU jump cutoff")
    p.add_argument("--rate", type=float, help="death-immigration cluster rate r")
    p.add_argument("--cluster", metavar="geometric:Q", help="death-immigration cluster pgf")
    p.add_argument("--samples", metavar="FILE", help="write terminal samples as CSV")

    p = sub.add_parser("fit", parents=[common, family], help="least-squares TL fit (a, b)")
    p.add_argument("--csv", metavar="FILE", help="CSV with mu,sigma2 columns")
    p.add_argument("--free")
    p.add_argument("--sweep", metavar="SPEC")
    p.add_argument("--rescale", type=float, default=1.0, metavar="SIGMA1SQ")

    p = sub.add_parser("replay", parents=[common], help="re-run the command recorded in a manifest")
    p.add_argument("manifest", metavar="FILE", help="JSON output or CSV file carrying a manifest")

    return parser


class TlidApp:
    def __init__(self, argv: Optional[List[str]] = None):
        self.argv = list(sys.argv[1:] if argv is None else argv)
        self.console = TlidConsole()
        self.config = None
        self.args: Optional[argparse.Namespace] = None
        self.commands: Dict[str, Callable[[argparse.Namespace], None]] = {
            "moments": self._cmd_moments,
            "curve": self._cmd_curve,
            "sd-check": self._cmd_sd_check,
            "simulate": self._cmd_simulate,
            "fit": self._cmd_fit,
            "replay": self._cmd_replay,
        }

    def run(self) -> int:
        try:
            self.args = self._parse()
            args = self.args
            setup_logging(args.log_dir, args.log_level, to_file=not args.no_log_file)
            logger.info(f"argv: {self.argv}")

            self.commands[args.command](args)
            return 0

        except TlidError as e:
            logger.error(f"{e.code}: {e.message}")
            print(f"error[{e.code}]: {e.message}", file=sys.stderr)
            if self.args is not None and self.args.pretty:
                self.console.print_error(e.message)
            return 2
        except KeyboardInterrupt:
            print("error[INTERRUPTED]: interrupted by user", file=sys.stderr)
            return 1
        except Exception as e:
            logger.exception("Unexpected error")
            print(f"error[INTERNAL]: {e}", file=sys.stderr)
            return 1

    # ─── configuration ──────────────────────────────────────────

    def _parse(self) -> argparse.Namespace:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(self.argv)
        self.config = get_config()

        parser = build_parser()
        if known.config:
            valid = set(self.config.flag_defaults()) | EXTRA_CONFIG_KEYS
            self.config.load_file(known.config, known_keys=valid)

        defaults = self.config.flag_defaults()
        for action in parser._subparsers._group_actions:
            for subparser in action.choices.values():
                subparser.set_defaults(**defaults)
        return parser.parse_args(self.argv)

    def _manifest(self, args: argparse.Namespace) -> RunManifest:
        params = {k: v for k, v in vars(args).items() if k not in ("command",)}
        return RunManifest(command=args.command, params=params, argv=self.argv, seed=getattr(args, "seed", None))

    def _family(self, args: argparse.Namespace) -> FamilyParams:
        if not args.family:
            raise DomainError("--family is required for this command")
        return make_family(args.family, **{k: getattr(args, k) for k in FAMILY_FLAGS})

    def _template(self, args: argparse.Namespace) -> FamilyTemplate:
        if not args.family:
            raise DomainError("--family is required for this command")
        free = args.free or DEFAULT_FREE[FamilyKind(args.family)]
        drop = {"p", "q"} if free in ("p", "q") else {free}
        fixed = {k: getattr(args, k) for k in FAMILY_FLAGS if k not in drop}
        return FamilyTemplate.of(args.family, free, **fixed)

    # ─── commands ───────────────────────────────────────────────

    def _cmd_moments(self, args: argparse.Namespace) -> None:
        fam = self._family(args)
        template = FamilyTemplate.for_family(fam, args.free)
        report = tl_report(fam, template, sigma1sq=args.rescale)
        payload: Dict[str, Any] = {
            "family": fam.kind.value,
            "params": fam.params(),
            "mu": report.mu,
            "sigma2": report.sigma2,
            "b": report.b,
            "a": report.a,
            "branch": report.branch,
            "critical": report.critical,
        }
        if args.rescale != 1.0:
            rescaled = rescale(fam, args.rescale)
            if rescaled.family is not None:
                payload["rescaled_family"] = rescaled.family.params()
            if rescaled.support_step is not None:
                payload["support_step"] = rescaled.support_step

        write_json(payload, self._manifest(args), sys.stdout)
        if args.pretty:
            self.console.show_summary(fam.label, {k: v for k, v in payload.items() if not isinstance(v, dict)})

    def _cmd_curve(self, args: argparse.Namespace) -> None:
        template = self._template(args)
        curve = b_curve(template, _parse_sweep(args.sweep))
        rows = [(r.param, r.mu, r.sigma2, r.b, r.branch, r.excluded) for r in curve.rows]

        comments = [f"template={template.label}", "critical=" + json.dumps(
            {k: (v if not isinstance(v, float) or math.isfinite(v) else None) for k, v in curve.critical.items()}
        )]
        for s in curve.singularities:
            comments.append(f"singularity {s.name}={s.value!r} left_sign={s.left_sign:+d} right_sign={s.right_sign:+d}")

        manifest = self._manifest(args)
        if args.output:
            with open(args.output, "w", newline="", encoding="utf-8") as f:
                write_csv(f, manifest, CURVE_COLUMNS, rows, comments)
            logger.info(f"curve written to {args.output}")
            if args.pretty:
                self.console.print_info(f"curve written to {args.output}")
        else:
            write_csv(sys.stdout, manifest, CURVE_COLUMNS, rows, comments)

        if args.pretty:
            self.console.show_table(template.label, CURVE_COLUMNS, rows, highlight="Singular")

    def _cmd_sd_check(self, args: argparse.Namespace) -> None:
        fam = self._family(args)
        order, tol = args.order, args.tol
        payload: Dict[str, Any] = {"family": fam.kind.value, "params": fam.params()}

        if fam.discrete:
            canonical = sd_canonical(fam, order, tol)
            claim = canonical.claim
            payload.update({
                "verdict": canonical.verdict,
                "r": canonical.rate,
                "first_negative_index": canonical.first_negative_index,
                "min_coefficient": canonical.min_coefficient,
                "order": canonical.order,
                "tol": tol,
                "h_head": canonical.h.coeffs[:8],
                "reference_claim": {
                    "statement": claim.statement,
                    "claimed": claim.claimed,
                    "agrees": claim.agrees,
                    "discrepancy": claim.discrepancy,
                },
            })
            if canonical.numerator is not None:
                payload["numerator_head"] = canonical.numerator.coeffs[:8]
                payload["numerator_nonnegative"] = canonical.numerator_nonnegative
        elif isinstance(fam, TweBLE):
            analysis = tweble_sd_analysis(fam.alpha, fam.theta)
            payload.update({"verdict": analysis.verdict, "lambda_c": analysis.lambda_c,
                            "witness_lambda": analysis.witness_lambda})
            if analysis.witness_lambda is not None:
                idx = int(np.flatnonzero(analysis.lambdas == analysis.witness_lambda)[0])
                payload["l0_prime_at_witness"] = analysis.l0_prime[idx]
            if analysis.levy is not None:
                payload["levy_one_wedge_x"] = analysis.levy.small_jump_integral
        elif isinstance(fam, Gamma):
            payload.update({
                "verdict": Verdict.SD,
                "background": "compound Poisson(alpha) with exponential(beta) jumps",
                "phi0_at_1": float(gamma_phi0(fam, 1.0)),
            })

        write_json(payload, self._manifest(args), sys.stdout)
        if args.pretty:
            style = self.console.print_success if payload["verdict"] is Verdict.SD else self.console.print_warning
            style(f"{fam.label}: {payload['verdict'].value}")
            claim = payload.get("reference_claim")
            if claim and claim["discrepancy"]:
                self.console.print_warning(f"reference claim disagrees with the oracle: {claim['statement']}")

    def _sim_config(self, args: argparse.Namespace) -> SimConfig:
        return SimConfig(
            n_paths=args.paths,
            seed=args.seed,
            horizon=args.horizon,
            n_steps=args.steps,
            burn_in=args.burn_in,
            stream_id=args.stream_id,
            block_size=args.block_size,
            workers=args.threads,
        )

    def _with_progress(self, args: argparse.Namespace, label: str, cfg: SimConfig,
                       run: Callable[[Optional[Callable[[int, int], None]]], SimResult]) -> SimResult:
        if not args.progress:
            return run(None)
        with self.console.show_progress() as progress:
            task = progress.add_task(label, total=cfg.n_blocks)
            return run(lambda done, total: progress.update(task, completed=done))

    def _cmd_simulate(self, args: argparse.Namespace) -> None:
        cfg = self._sim_config(args)
        order = max(args.order, 256)
        process = args.process
        summary: Dict[str, Any] = {"process": process}

        if process == "disaster":
            target = make_family("cpgeo", alpha=args.alpha, p=args.p, q=args.q)
            res = self._with_progress(args, "disaster chain", cfg,
                                      lambda cb: simulate_disaster_chain(target.alpha, target.p, cfg, cb))
            summary.update(self._discrete_summary(res, self._limit_pmf(target.pmf_array, order)))
            summary["target_mean"] = target.moments().mu
            summary["target_variance"] = target.moments().sigma2
            summary["target_zero_probability"] = float(target.pgf(0.0))

        elif process == "death-immigration":
            rate, h, limit_fn = self._death_immigration_inputs(args, order)
            res = self._with_progress(args, "death-immigration", cfg,
                                      lambda cb: simulate_death_immigration(rate, h, cfg, cb))
            summary.update(self._discrete_summary(res, self._limit_pmf(limit_fn, order)))
            summary["rate"] = rate
            summary["target_zero_probability"] = res.extras["zero_probability"]

        elif process == "ou-gamma":
            target = make_family("gamma", alpha=args.alpha, beta=args.beta)
            res = self._with_progress(args, "ou-gamma", cfg,
                                      lambda cb: simulate_ou_compound_poisson(target.alpha, target.beta, cfg, cb))
            summary.update(self._continuous_summary(res))
            jumps = zero_fraction(res.event_counts)
            summary["zero_jump_fraction"] = jumps
            summary["target_zero_jump_probability"] = res.extras["zero_jump_probability"]
            summary["ks_to_limit"] = ks_distance(res.terminal_samples, target.frozen().cdf)

        else:
            target = make_family("tweble", alpha=args.alpha, theta=args.theta)
            res = self._with_progress(args, "tweble-ou", cfg,
                                      lambda cb: simulate_tweble_ou(target.alpha, target.theta, cfg, args.eps, cb))
            summary.update(self._continuous_summary(res))

        summary["extras"] = res.extras
        summary["config"] = cfg.to_dict()
        manifest = self._manifest(args)
        if args.samples:
            rows = zip(range(cfg.n_paths), res.terminal_samples, res.event_counts)
            with open(args.samples, "w", newline="", encoding="utf-8") as f:
                write_csv(f, manifest, SAMPLE_COLUMNS, rows)
            logger.info(f"{cfg.n_paths} samples written to {args.samples}")

        write_json(summary, manifest, sys.stdout)
        if args.pretty:
            self.console.show_summary(f"simulate {process}", {k: v for k, v in summary.items() if not isinstance(v, dict)})

    def _death_immigration_inputs(self, args: argparse.Namespace,
                                  order: int) -> Tuple[float, PowerSeries, Callable[[int], np.ndarray]]:
        if args.cluster:
            if args.rate is None:
                raise DomainError("--rate is required with --cluster")
            h = _parse_cluster(args.cluster, order)
            rate = args.rate
            return rate, h, lambda n: canonical_pgf_series(rate, h.truncate(max(n, h.order))).coeffs

        fam = self._family(args)
        canonical = sd_canonical(fam, order, args.tol)
        if canonical.verdict is not Verdict.SD:
            raise NotSelfDecomposableError(
                f"{fam.label} is not SD (h_{canonical.first_negative_index} < 0); "
                "it is not a death-immigration limit",
                index=canonical.first_negative_index,
            )
        return canonical.rate, canonical.h, fam.pmf_array

    @staticmethod
    def _limit_pmf(pmf_fn: Callable[[int], np.ndarray], order: int) -> np.ndarray:
        n = order
        while True:
            values = np.asarray(pmf_fn(n))
            try:
                choose_cutoff(values)
                return values
            except DomainError:
                if n >= MAX_PMF_ORDER:
                    raise
                n *= 2

    @staticmethod
    def _discrete_summary(res: SimResult, limit_pmf: np.ndarray) -> Dict[str, Any]:
        moments = empirical_moments(res.terminal_samples)
        distance = pmf_distance(histogram(res.terminal_samples), limit_pmf)
        return {
            "mean": moments.mean,
            "variance": moments.variance,
            "zero_fraction": zero_fraction(res.terminal_samples),
            "tv_to_limit": distance.tv,
            "chi2_to_limit": distance.chi2,
            "cutoff": distance.cutoff,
        }

    @staticmethod
    def _continuous_summary(res: SimResult) -> Dict[str, Any]:
        moments = empirical_moments(res.terminal_samples)
        return {"mean": moments.mean, "variance": moments.variance}

    def _cmd_fit(self, args: argparse.Namespace) -> None:
        if args.csv:
            cols = read_csv_columns(args.csv, FIT_COLUMNS)
            points = np.column_stack([cols["mu"], cols["sigma2"]])
            source = args.csv
        elif args.sweep:
            template = self._template(args)
            moments = [template.family_at(x).moments() for x in _parse_sweep(args.sweep)]
            points = np.array([(m.mu, m.sigma2) for m in moments])
            source = template.label
        else:
            raise DomainError("fit needs --csv FILE or --family with --sweep")

        if args.rescale <= 0.0:
            raise DomainError(f"--rescale must be > 0, got {args.rescale!r}")
        points[:, 1] *= args.rescale

        fit = fit_taylor(points)
        payload = {
            "source": source,
            "a_hat": fit.a_hat,
            "b_hat": fit.b_hat,
            "r_squared": fit.r_squared,
            "n_points": fit.n_points,
            "max_abs_residual": float(np.max(np.abs(fit.residuals))),
        }
        write_json(payload, self._manifest(args), sys.stdout)
        if args.pretty:
            self.console.show_summary("Taylor's law fit", payload)

    def _cmd_replay(self, args: argparse.Namespace) -> None:
        manifest = RunManifest.load(args.manifest)
        if manifest.command == "replay" or not manifest.argv:
            raise ConfigurationError(f"{args.manifest} does not record a replayable command")
        if manifest.version != __version__:
            logger.warning(f"manifest written by v{manifest.version}, replaying with v{__version__}")
        logger.info(f"replaying {manifest.command}: {manifest.argv}")
        code = TlidApp(manifest.argv).run()
        if code:
            raise ConfigurationError(f"replayed command exited with status {code}")


def main(argv: Optional[List[str]] = None) -> int:
    app = TlidApp(argv)
    return app.run()


if __name__ == "__main__":
    sys.exit(main())
