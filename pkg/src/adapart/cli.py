"""Command-line interface.

Exit codes: 0 success, 1 usage error (bad flags, missing input files),
2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .density import evaluate_many, sample
from .errors import AdapartError, ArgumentError
from .harness import (
    ExperimentConfig,
    ModelArtifact,
    SamplerConfig,
    SieveConfig,
    fit_estimator,
    ingest,
    load_config,
    read_points,
    run_rate_experiment,
    thread_count,
)
from .inference import PosteriorSummary, posterior_concentration_probability, sieve_mle
from .partition import count_partitions, enumerate_partitions, partition_to_text
from .prior import dirichlet_ball_mass_bound, dirichlet_ball_mass_mc
from .synthetic import TruthSpec, make_truth

log = logging.getLogger("adapart")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _read_yaml(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return yaml.safe_load(p.read_text()) or {}


# -- subcommands ---------------------------------------------------------------

def cmd_fit(args) -> int:
    raw = _read_yaml(args.config)
    data, rescale = ingest(args.data, rescale=args.rescale)
    sampler = SamplerConfig(kind=args.sampler, iterations=args.iterations, I_max=args.i_max)
    sieve = SieveConfig(r=args.r, strategy=args.strategy)
    cfg = ExperimentConfig(truth=TruthSpec("piecewise"), prior=dict(raw.get("prior") or {}),
                           estimator=args.estimator, sampler=sampler, sieve=sieve,
                           seed=0 if args.seed is None else args.seed)
    if args.estimator == "sieve_mle" and args.size is not None:
        model = sieve_mle(data, args.size, strategy=args.strategy)
    else:
        model, _ = fit_estimator(data, cfg, data.n, seed=args.seed)
    art = ModelArtifact(model, seed=args.seed, config_hash=cfg.config_hash(), rescale=rescale,
                        meta={"estimator": args.estimator, "n": data.n})
    _emit(art.to_text(), args.output)
    return 0


def _to_unit(art: ModelArtifact, x: np.ndarray) -> np.ndarray:
    u = x if art.rescale is None else art.rescale.apply(x)
    outside = np.any((u < 0) | (u > 1), axis=1)
    if outside.any():
        log.warning("%d point(s) lie outside the training box and were clamped", int(outside.sum()))
        u = np.clip(u, 0.0, 1.0)
    return u


def cmd_eval(args) -> int:
    art = ModelArtifact.load(args.model)
    x = read_points(args.points)
    f = art.density()
    if x.shape[1] != f.p:
        raise ArgumentError(f"points have {x.shape[1]} columns, model has dimension {f.p}")
    vals = evaluate_many(f, _to_unit(art, x))
    if art.rescale is not None:
        vals = vals * art.rescale.jacobian
    _emit("".join(f"{format(float(v), '.17g')}\n" for v in vals), args.output)
    return 0


def cmd_sample(args) -> int:
    art = ModelArtifact.load(args.model)
    y = sample(art.density(), args.count, seed=args.seed)
    if art.rescale is not None:
        y = art.rescale.invert(y)
    _emit("".join(",".join(format(float(v), ".17g") for v in row) + "\n" for row in y), args.output)
    return 0


def cmd_rate_exp(args) -> int:
    if args.config is None:
        raise UsageError("rate-exp requires --config")
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.output is not None:
        changes["output"] = args.output
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    report = run_rate_experiment(cfg, threads=thread_count())
    if not cfg.output:
        sys.stdout.write(report.table())
    for n, e in report.medians:
        print(f"# n={n} median_error={e:.6g}", file=sys.stderr)
    if report.fit is not None:
        print(f"# slope={report.fit.slope:.6f} stderr={report.fit.stderr:.6f} r2={report.fit.r2:.6f}",
              file=sys.stderr)
    return 0


def cmd_enumerate(args) -> int:
    if args.size < 1 or args.dim < 1:
        raise UsageError("--size and --dim must be positive")
    count = count_partitions(args.size, args.dim)
    lines = []
    if not args.count_only:
        for q in enumerate_partitions(args.size, args.dim):
            lines.append(partition_to_text(q))
    lines.append(f"count {count}\n")
    _emit("".join(lines), args.output)
    return 0


def cmd_prior_check(args) -> int:
    alphas = args.alphas or [0.3, 0.5, 0.9]
    sizes = args.sizes or [2, 3, 4]
    rows = ["I\talpha\teps\ttau\tbound\tmc_mass\tmc_se\tholds"]
    rng = np.random.default_rng(args.seed)
    ok = True
    for I in sizes:
        for a in alphas:
            for frac in (0.5, 0.9):
                eps = frac / I
                for tau in (0.0, eps * eps / 2):
                    bound = dirichlet_ball_mass_bound(I, a, eps, tau)
                    est, se = dirichlet_ball_mass_mc(I, a, eps, tau, n_mc=args.n_mc,
                                                     seed=int(rng.integers(2**63)))
                    holds = est >= bound - 3 * se
                    ok &= holds
                    rows.append(f"{I}\t{a}\t{eps:.6g}\t{tau:.6g}\t{bound:.6g}\t{est:.6g}\t{se:.3g}\t{int(holds)}")
    _emit("\n".join(rows) + "\n", args.output)
    return 0 if ok else 2


def cmd_posterior_mass(args) -> int:
    art = ModelArtifact.load(args.model)
    if not isinstance(art.model, PosteriorSummary):
        raise ArgumentError("posterior-mass needs a posterior model (fit with --estimator posterior_mean)")
    if args.truth_model:
        truth = ModelArtifact.load(args.truth_model).density()
    else:
        raw = _read_yaml(args.config)
        if "truth" not in raw:
            raise UsageError("posterior-mass needs --truth-model or a --config with a truth section")
        truth = make_truth(TruthSpec.from_mapping(raw["truth"]), seed=args.seed)
    prob = posterior_concentration_probability(art.model, truth, args.radius, n_mc=args.n_mc, seed=args.seed)
    _emit(f"radius\t{args.radius!r}\nmass_outside\t{prob!r}\n", args.output)
    return 0


# -- parser ----------------------------------------------------------------------

def _float_list(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v]


def _int_list(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="YAML config file")
    common.add_argument("--output", default=None, help="output path (stdout when omitted)")

    parser = _Parser(prog="adapart", description="Adaptive dyadic-partition density estimation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit a model to a data file")
    p.add_argument("--data", required=True)
    p.add_argument("--rescale", action="store_true", help="map each column's range onto [0, 1]")
    p.add_argument("--estimator", choices=["posterior_mean", "sieve_mle"], default="posterior_mean")
    p.add_argument("--sampler", choices=["mcmc", "exact"], default="mcmc")
    p.add_argument("--iterations", type=int, default=20_000)
    p.add_argument("--i-max", type=int, default=None)
    p.add_argument("--size", type=int, default=None, help="fixed sieve size (sieve_mle)")
    p.add_argument("--r", type=float, default=1.0, help="approximation exponent for the sieve schedule")
    p.add_argument("--strategy", choices=["greedy", "exhaustive"], default="greedy")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model's density at points")
    p.add_argument("--model", required=True)
    p.add_argument("--points", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", parents=[common], help="draw points from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, default=1000)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("rate-exp", parents=[common], help="run a concentration-rate experiment")
    p.set_defaults(func=cmd_rate_exp)

    p = sub.add_parser("enumerate", parents=[common], help="list binary partitions of a given size")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--count-only", action="store_true")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("prior-check", parents=[common], help="tabulate Dirichlet ball-mass bounds vs Monte Carlo")
    p.add_argument("--sizes", type=_int_list, default=None)
    p.add_argument("--alphas", type=_float_list, default=None)
    p.add_argument("--n-mc", type=int, default=200_000)
    p.set_defaults(func=cmd_prior_check)

    p = sub.add_parser("posterior-mass", parents=[common], help="posterior mass outside a Hellinger ball")
    p.add_argument("--model", required=True)
    p.add_argument("--truth-model", default=None, help="model file holding the true density")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--n-mc", type=int, default=10_000)
    p.set_defaults(func=cmd_posterior_mass)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AdapartError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
