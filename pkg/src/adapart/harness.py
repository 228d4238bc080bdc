"""Experiment configuration, data ingestion, model artifacts and rate experiments."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from . import __version__
from .density import PiecewiseDensity, density_from_text, density_to_text, hellinger_to_truth
from .errors import AdapartError, ArgumentError, ExperimentError, IngestionError
from .inference import (
    Dataset,
    PosteriorSummary,
    exact_posterior,
    mcmc_posterior,
    posterior_mean_density,
    sieve_mle,
    summary_from_text,
    summary_to_text,
)
from .prior import PriorParams
from .rates import RateFit, fit_rate_exponent, sieve_size_schedule
from .synthetic import TruthSpec, make_truth

THREADS_ENV = "ADAPART_THREADS"
ESTIMATORS = ("posterior_mean", "sieve_mle")


def thread_count(default: int = 1) -> int:
    """Worker count from the ADAPART_THREADS environment variable."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        k = int(raw)
    except ValueError as exc:
        raise ArgumentError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if k < 1:
        raise ArgumentError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return k


# -- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "mcmc"
    iterations: int = 20_000
    burn_in: Optional[int] = None
    I_max: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("mcmc", "exact"):
            raise ArgumentError(f"sampler kind must be mcmc or exact, got {self.kind!r}")
        if self.iterations < 1:
            raise ArgumentError("sampler iterations must be >= 1")
        if self.kind == "exact" and self.I_max is None:
            raise ArgumentError("the exact sampler needs I_max")


@dataclass(frozen=True)
class SieveConfig:
    r: Optional[float] = None
    A2: float = 1.0
    c1: float = 0.5
    strategy: str = "greedy"
    rounding: str = "nearest"

    def __post_init__(self):
        if self.strategy not in ("greedy", "exhaustive"):
            raise ArgumentError(f"sieve strategy must be greedy or exhaustive, got {self.strategy!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    truth: TruthSpec
    prior: dict = field(default_factory=dict)
    n_grid: tuple[int, ...] = (256, 1024, 4096)
    replicates: int = 5
    seed: int = 0
    estimator: str = "posterior_mean"
    sampler: SamplerConfig = SamplerConfig()
    sieve: SieveConfig = SieveConfig()
    eval_n_mc: int = 200_000
    output: Optional[str] = None

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ArgumentError(f"n_grid must be nonempty and strictly increasing, got {list(grid)}")
        if grid[0] < 2:
            raise ArgumentError("every n in n_grid must be >= 2")
        object.__setattr__(self, "n_grid", grid)
        if self.replicates < 1:
            raise ArgumentError("replicates must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ArgumentError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        PriorParams.from_mapping(self.prior, n_cap=2)

    @classmethod
    def from_mapping(cls, cfg: dict) -> ExperimentConfig:
        if not isinstance(cfg, dict):
            raise ArgumentError("config must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(cfg) - known
        if unknown:
            raise ArgumentError(f"unknown config keys: {sorted(unknown)}")
        if "truth" not in cfg:
            raise ArgumentError("config needs a 'truth' section")
        kw = dict(cfg)
        kw["truth"] = TruthSpec.from_mapping(cfg["truth"])
        kw["prior"] = dict(cfg.get("prior") or {})
        if "n_grid" in cfg:
            kw["n_grid"] = tuple(cfg["n_grid"])
        try:
            kw["sampler"] = SamplerConfig(**(cfg.get("sampler") or {}))
            kw["sieve"] = SieveConfig(**(cfg.get("sieve") or {}))
        except TypeError as exc:
            raise ArgumentError(str(exc)) from exc
        return cls(**kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["n_grid"] = list(self.n_grid)
        return d

    def config_hash(self) -> str:
        """Short digest of the fully expanded config (output path excluded)."""
        d = self.to_dict()
        d.pop("output", None)
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def prior_params(self, n: int) -> PriorParams:
        cap = self.prior.get("n_cap")
        return PriorParams.from_mapping(self.prior, n_cap=n if cap is None else min(int(cap), n))


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read an experiment config from a YAML file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ArgumentError(f"cannot parse config {path}: {exc}") from exc
    return ExperimentConfig.from_mapping(raw or {})


# -- ingestion ------------------------------------------------------------------

@dataclass(frozen=True)
class Rescale:
    """Per-coordinate affine map x -> (x - lo) / span onto the unit cube."""

    lo: tuple[float, ...]
    span: tuple[float, ...]

    @classmethod
    def fit(cls, x: np.ndarray) -> Rescale:
        lo, hi = x.min(axis=0), x.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return cls(tuple(float(v) for v in lo), tuple(float(v) for v in span))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.array(self.lo)) / np.array(self.span)

    def invert(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) * np.array(self.span) + np.array(self.lo)

    @property
    def jacobian(self) -> float:
        """Density factor from unit-cube to original coordinates."""
        return float(1.0 / np.prod(self.span))


_SPLIT_WS = re.compile(r"\s+")


def _detect_delimiter(line: str) -> Optional[str]:
    for d in (",", "\t", ";"):
        if d in line:
            return d
    return None


def read_points(path: Union[str, Path]) -> np.ndarray:
    """Parse a delimiter-separated numeric file; blank lines and '#' comments are skipped.

    Row numbers in errors are 1-based file line numbers.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    rows, width, delim = [], None, None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if delim is None and width is None:
                delim = _detect_delimiter(s)
            cells = s.split(delim) if delim else _SPLIT_WS.split(s)
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                raise IngestionError(f"row {lineno}: non-numeric cell in {s!r}", row=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise IngestionError(f"row {lineno}: NaN or infinite value", row=lineno)
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise IngestionError(f"row {lineno}: expected {width} columns, found {len(vals)}", row=lineno)
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data rows", row=0)
    return np.array(rows, dtype=float)


def ingest(path: Union[str, Path], rescale: bool = False) -> tuple[Dataset, Optional[Rescale]]:
    """Load a data file as a Dataset, optionally mapping each column's [min, max] onto [0, 1]."""
    x = read_points(path)
    if not rescale:
        if np.any(x < 0) or np.any(x > 1):
            bad = int(np.flatnonzero(np.any((x < 0) | (x > 1), axis=1))[0])
            raise IngestionError(f"data row {bad + 1} lies outside [0, 1]; use rescaling", row=bad + 1)
        return Dataset(x), None
    rs = Rescale.fit(x)
    return Dataset(np.clip(rs.apply(x), 0.0, 1.0)), rs


# -- model artifacts -----------------------------------------------------------

@dataclass
class ModelArtifact:
    """A fitted density or posterior summary with provenance."""

    model: Union[PiecewiseDensity, PosteriorSummary]
    seed: Optional[int] = None
    config_hash: str = "-"
    version: str = __version__
    rescale: Optional[Rescale] = None
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "density" if isinstance(self.model, PiecewiseDensity) else "posterior"

    def density(self) -> PiecewiseDensity:
        """Point estimate: the stored density, or the posterior mean density."""
        if isinstance(self.model, PiecewiseDensity):
            return self.model
        return posterior_mean_density(self.model)

    def to_text(self) -> str:
        lines = [
            "adapart-model v1",
            f"kind {self.kind}",
            f"version {self.version}",
            f"seed {'-' if self.seed is None else int(self.seed)}",
            f"config_hash {self.config_hash}",
        ]
        if self.rescale is None:
            lines.append("rescale none")
        else:
            lines.append(f"rescale {len(self.rescale.lo)}")
            lines += [f"{format(a, '.17g')} {format(b, '.17g')}" for a, b in zip(self.rescale.lo, self.rescale.span)]
        for k in sorted(self.meta):
            lines.append(f"meta {k} {json.dumps(self.meta[k], sort_keys=True)}")
        lines.append("body")
        body = density_to_text(self.model) if self.kind == "density" else summary_to_text(self.model)
        return "\n".join(lines) + "\n" + body

    @classmethod
    def from_text(cls, text: str) -> ModelArtifact:
        lines = text.splitlines()
        if not lines or lines[0].strip() != "adapart-model v1":
            raise ArgumentError("missing 'adapart-model v1' header")
        head: dict = {}
        meta: dict = {}
        rescale = None
        i = 1
        while i < len(lines) and lines[i].strip() != "body":
            key, _, val = lines[i].partition(" ")
            if key == "rescale":
                if val != "none":
                    p = int(val)
                    pairs = [ln.split() for ln in lines[i + 1:i + 1 + p]]
                    rescale = Rescale(tuple(float(a) for a, _ in pairs), tuple(float(b) for _, b in pairs))
                    i += p
            elif key == "meta":
                mk, _, mv = val.partition(" ")
                meta[mk] = json.loads(mv)
            else:
                head[key] = val
            i += 1
        if i >= len(lines):
            raise ArgumentError("model artifact has no body")
        body = "\n".join(lines[i + 1:]) + "\n"
        kind = head.get("kind")
        if kind == "density":
            model = density_from_text(body)
        elif kind == "posterior":
            model = summary_from_text(body)
        else:
            raise ArgumentError(f"unknown model kind {kind!r}")
        seed = head.get("seed", "-")
        return cls(model, None if seed == "-" else int(seed), head.get("config_hash", "-"),
                   head.get("version", "?"), rescale, meta)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path]) -> ModelArtifact:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"model file not found: {path}")
        return cls.from_text(path.read_text())


# -- estimation -----------------------------------------------------------------

def fit_estimator(x, cfg: ExperimentConfig, n: int, seed=None, nominal_r: Optional[float] = None):
    """Fit the configured estimator; returns (model, point-estimate density)."""
    if cfg.estimator == "sieve_mle":
        r = cfg.sieve.r if cfg.sieve.r is not None else nominal_r
        if r is None:
            raise ArgumentError("sieve_mle needs sieve.r or a truth with nominal_r")
        I = sieve_size_schedule(n, r, cfg.sieve.A2, cfg.sieve.c1, cfg.sieve.rounding)
        f = sieve_mle(x, I, strategy=cfg.sieve.strategy)
        return f, f
    params = cfg.prior_params(n)
    sc = cfg.sampler
    if sc.kind == "exact":
        summary = exact_posterior(x, params, I_max=sc.I_max)
    else:
        summary = mcmc_posterior(x, params, sc.iterations, seed=seed, burn_in=sc.burn_in, I_max=sc.I_max)
    return summary, posterior_mean_density(summary)


def cell_seeds(base: int, n: int, replicate: int) -> tuple[np.random.SeedSequence, ...]:
    """Independent (data, estimator, evaluation) seeds of one experiment cell."""
    return tuple(np.random.SeedSequence([int(base), int(n), int(replicate)]).spawn(3))


@dataclass(frozen=True)
class CellResult:
    n: int
    replicate: int
    error: float
    size: int
    runtime: float


def run_cell(cfg: ExperimentConfig, n: int, replicate: int) -> CellResult:
    """One (n, replicate) cell: sample data, fit, measure Hellinger error to the truth."""
    t0 = time.perf_counter()
    try:
        truth = make_truth(cfg.truth, seed=cfg.seed)
        s_data, s_fit, s_eval = cell_seeds(cfg.seed, n, replicate)
        x = truth.sample(n, seed=s_data)
        _, f = fit_estimator(x, cfg, n, seed=s_fit, nominal_r=truth.nominal_r)
        err = hellinger_to_truth(truth, f, n_mc=cfg.eval_n_mc, seed=s_eval)
    except AdapartError as exc:
        raise ExperimentError(f"cell n={n} replicate={replicate} seed={cfg.seed}: {exc}",
                              n=n, replicate=replicate, seed=cfg.seed) from exc
    return CellResult(n, replicate, float(err), f.partition.size, time.perf_counter() - t0)


def _run_cell_args(args):
    return run_cell(*args)


@dataclass
class RateReport:
    config: ExperimentConfig
    cells: list[CellResult]
    medians: list[tuple[int, float]]
    fit: Optional[RateFit]

    def table(self) -> str:
        """Deterministic TSV: one row per cell with the provenance needed to re-run it."""
        h = self.config.config_hash()
        out = ["n\treplicate\tseed\tconfig_hash\terror\tsize"]
        for c in self.cells:
            out.append(f"{c.n}\t{c.replicate}\t{self.config.seed}\t{h}\t{format(c.error, '.17g')}\t{c.size}")
        return "\n".join(out) + "\n"

    def timings(self) -> str:
        out = ["n\treplicate\truntime_s"]
        out += [f"{c.n}\t{c.replicate}\t{c.runtime:.3f}" for c in self.cells]
        return "\n".join(out) + "\n"

    def manifest(self) -> dict:
        fit = None if self.fit is None else self.fit._asdict()
        return {
            "version": __version__,
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "median_error": [[n, e] for n, e in self.medians],
            "fit": fit,
        }

    def write(self, out_dir: Union[str, Path]) -> dict[str, Path]:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"report": d / "report.tsv", "manifest": d / "manifest.json", "timings": d / "timings.tsv"}
        paths["report"].write_text(self.table())
        paths["manifest"].write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        paths["timings"].write_text(self.timings())
        return paths


def run_rate_experiment(cfg: ExperimentConfig, threads: Optional[int] = None, progress=None) -> RateReport:
    """Run every (n, replicate) cell and fit the rate exponent to per-n median errors.

    Cells run in a process pool of ``threads`` workers (default from
    ADAPART_THREADS, else 1). Results are sorted by (n, replicate) before
    aggregation, so the report does not depend on scheduling.
    """
    threads = thread_count() if threads is None else threads
    jobs = [(cfg, n, r) for n in cfg.n_grid for r in range(cfg.replicates)]
    if threads <= 1:
        cells = []
        for job in jobs:
            cells.append(run_cell(*job))
            if progress is not None:
                progress(cells[-1])
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(_run_cell_args, jobs))
    cells.sort(key=lambda c: (c.n, c.replicate))
    medians = [(n, float(np.median([c.error for c in cells if c.n == n]))) for n in cfg.n_grid]
    fit = None
    if len(medians) >= 3 and all(e > 0 for _, e in medians):
        fit = fit_rate_exponent(medians)
    report = RateReport(cfg, cells, medians, fit)
    if cfg.output:
        report.write(cfg.output)
    return report
