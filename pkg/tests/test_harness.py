import dataclasses
import json
import math

import numpy as np
import pytest

from adapart.density import evaluate_many
from adapart.errors import ArgumentError, ExperimentError, IngestionError
from adapart.harness import (
    THREADS_ENV,
    ExperimentConfig,
    ModelArtifact,
    Rescale,
    SamplerConfig,
    SieveConfig,
    cell_seeds,
    ingest,
    load_config,
    read_points,
    run_rate_experiment,
    thread_count,
)
from adapart.inference import exact_posterior
from adapart.prior import PriorParams
from adapart.synthetic import TruthSpec, piecewise_from_splits

PIECEWISE_2D = {"family": "piecewise",
                "params": {"p": 2, "splits": [[0, 1], [0, 2], [2, 1]], "weights": [0.1, 0.35, 0.2, 0.35]}}


# -- ingestion -------------------------------------------------------------------

def test_read_small_file(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("# header comment\n0.1,0.2\n\n0.3,0.4\n0.5,0.6\n")
    x = read_points(f)
    assert x.shape == (3, 2)
    assert np.array_equal(x, [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])


@pytest.mark.parametrize("sep", ["\t", ";", " ", "   "])
def test_other_delimiters(tmp_path, sep):
    f = tmp_path / "d.txt"
    f.write_text(f"0.1{sep}0.2\n0.3{sep}0.4\n")
    assert read_points(f).shape == (2, 2)


def test_rescale_maps_range_exactly(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 3)) * [1, 10, 100] + [5, -3, 0]
    f = tmp_path / "d.csv"
    f.write_text("".join(",".join(repr(float(v)) for v in row) + "\n" for row in x))
    data, rs = ingest(f, rescale=True)
    assert np.all(data.points.min(axis=0) == 0.0)
    assert np.all(data.points.max(axis=0) == 1.0)
    assert np.allclose(rs.invert(data.points), x)
    assert rs.jacobian == pytest.approx(1 / np.prod(x.max(axis=0) - x.min(axis=0)))


def test_unscaled_data_outside_unit_cube_is_rejected(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("0.1,0.2\n0.3,1.4\n")
    with pytest.raises(IngestionError, match="row 2"):
        ingest(f)


def test_nan_row_is_named(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("".join(f"0.{i},0.5\n" for i in range(1, 7)) + "nan,0.5\n0.9,0.9\n")
    with pytest.raises(IngestionError, match="row 7") as exc:
        read_points(f)
    assert exc.value.row == 7


@pytest.mark.parametrize("body,row", [("0.1,0.2\n0.3\n", 2), ("0.1,0.2\n0.3,abc\n", 2), ("0.1,inf\n", 1)])
def test_malformed_rows(tmp_path, body, row):
    f = tmp_path / "d.csv"
    f.write_text(body)
    with pytest.raises(IngestionError) as exc:
        read_points(f)
    assert exc.value.row == row and f"row {row}" in str(exc.value)


def test_empty_and_missing_files(tmp_path):
    f = tmp_path / "empty.csv"
    f.write_text("# nothing\n\n")
    with pytest.raises(IngestionError):
        read_points(f)
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        read_points(tmp_path / "nope.csv")


def test_constant_column_rescale_is_finite():
    rs = Rescale.fit(np.array([[1.0, 2.0], [1.0, 3.0]]))
    assert np.all(np.isfinite(rs.apply([[1.0, 2.5]])))


# -- configuration ----------------------------------------------------------------------

def test_config_validation():
    base = {"truth": PIECEWISE_2D}
    ExperimentConfig.from_mapping(base)
    for bad in [{"n_grid": [100, 100]}, {"n_grid": []}, {"replicates": 0}, {"estimator": "mode"},
                {"prior": {"lambda": -1}}, {"sampler": {"kind": "gibbs"}}, {"sieve": {"strategy": "random"}},
                {"sampler": {"kind": "exact"}}, {"bogus": 1}, {"sampler": {"steps": 5}}]:
        with pytest.raises(ArgumentError):
            ExperimentConfig.from_mapping({**base, **bad})
    with pytest.raises(ArgumentError):
        ExperimentConfig.from_mapping({"n_grid": [10, 20]})


def test_shipped_configs_load():
    from pathlib import Path
    for p in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.yaml")):
        cfg = load_config(p)
        assert cfg.config_hash() == ExperimentConfig.from_mapping(cfg.to_dict()).config_hash()


def test_config_hash_ignores_output_only():
    a = ExperimentConfig.from_mapping({"truth": PIECEWISE_2D, "output": "x"})
    assert a.config_hash() == dataclasses.replace(a, output="y").config_hash()
    assert a.config_hash() != dataclasses.replace(a, seed=1).config_hash()


def test_prior_params_cap_follows_n():
    cfg = ExperimentConfig.from_mapping({"truth": PIECEWISE_2D, "prior": {"lambda": 2}})
    assert cfg.prior_params(500) == PriorParams(lam=2.0, n_cap=500)


def test_thread_count_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert thread_count() == 1
    monkeypatch.setenv(THREADS_ENV, "3")
    assert thread_count() == 3
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ArgumentError):
        thread_count()


def test_cell_seeds_are_distinct_and_stable():
    seeds = {tuple(s.generate_state(2)) for n in (10, 20) for r in range(3) for s in cell_seeds(0, n, r)}
    assert len(seeds) == 18
    assert [s.entropy for s in cell_seeds(5, 10, 1)] == [s.entropy for s in cell_seeds(5, 10, 1)]


# -- model artifacts -------------------------------------------------------------------

def test_density_artifact_round_trip(tmp_path):
    f = piecewise_from_splits(2, [[0, 1], [1, 2]], [0.2, 0.3, 0.5])
    art = ModelArtifact(f, seed=4, config_hash="abc", rescale=Rescale((1.0, -2.0), (3.0, 0.5)),
                        meta={"n": 10, "estimator": "sieve_mle"})
    path = tmp_path / "m.txt"
    art.save(path)
    back = ModelArtifact.load(path)
    assert back.to_text() == art.to_text()
    assert back.seed == 4 and back.rescale == art.rescale and back.meta == art.meta
    assert np.array_equal(back.density().weights, f.weights)


def test_posterior_artifact_round_trip():
    x = np.random.default_rng(0).random((40, 1)) ** 2
    s = exact_posterior(x, PriorParams(n_cap=40), I_max=3)
    art = ModelArtifact(s)
    back = ModelArtifact.from_text(art.to_text())
    assert back.kind == "posterior" and back.seed is None
    y = np.linspace(0.01, 0.99, 17).reshape(-1, 1)
    assert np.allclose(evaluate_many(back.density(), y), evaluate_many(art.density(), y), rtol=1e-13)


def test_artifact_rejects_bad_text(tmp_path):
    with pytest.raises(ArgumentError):
        ModelArtifact.from_text("something else\n")
    with pytest.raises(ArgumentError):
        ModelArtifact.from_text("adapart-model v1\nkind density\n")
    with pytest.raises(FileNotFoundError):
        ModelArtifact.load(tmp_path / "missing.txt")


# -- experiments ------------------------------------------------------------------------

def _small_cfg(**kw):
    base = dict(truth=TruthSpec.from_mapping(PIECEWISE_2D), n_grid=(100, 1000, 10_000), replicates=4,
                seed=11, sampler=SamplerConfig(kind="exact", I_max=5))
    base.update(kw)
    return ExperimentConfig(**base)


def test_report_is_deterministic_and_thread_independent(tmp_path):
    cfg = _small_cfg(n_grid=(50, 100, 200), replicates=2, sampler=SamplerConfig(iterations=800))
    a = run_rate_experiment(cfg, threads=1)
    b = run_rate_experiment(cfg, threads=2)
    assert a.table() == b.table()
    pa, pb = a.write(tmp_path / "a"), b.write(tmp_path / "b")
    assert pa["report"].read_bytes() == pb["report"].read_bytes()
    assert pa["manifest"].read_bytes() == pb["manifest"].read_bytes()
    man = json.loads(pa["manifest"].read_text())
    assert man["config_hash"] == cfg.config_hash()
    assert len(a.table().splitlines()) == 1 + 6


def test_piecewise_truth_error_shrinks_with_n():
    report = run_rate_experiment(_small_cfg(replicates=20, n_grid=(100, 10_000)))
    med = dict(report.medians)
    assert med[10_000] < med[100]
    assert all(c.error >= 0 and math.isfinite(c.error) for c in report.cells)


def test_sieve_experiment_uses_schedule():
    cfg = _small_cfg(estimator="sieve_mle", sieve=SieveConfig(r=1.0), replicates=2)
    report = run_rate_experiment(cfg)
    sizes = {c.n: c.size for c in report.cells}
    assert sizes[100] <= sizes[1000] <= sizes[10_000]


def test_failing_cell_reports_its_coordinates():
    cfg = _small_cfg(estimator="sieve_mle", n_grid=(5, 6, 7), replicates=1)   # piecewise truth has no nominal r
    with pytest.raises(ExperimentError) as exc:
        run_rate_experiment(cfg)
    assert exc.value.n == 5 and exc.value.replicate == 0 and exc.value.seed == 11
