import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from adapart.density import PiecewiseDensity, TruthDensity
from adapart.errors import ArgumentError, UnsupportedError
from adapart.partition import enumerate_partitions, locate_many
from adapart.rates import fit_rate_exponent
from adapart.synthetic import (
    TruthSpec,
    best_approximation_error,
    bounded_variation_density,
    haar_sparse_density,
    holder_density,
    make_truth,
    piecewise_from_splits,
    regular_partition,
)


def _holder_cdf(beta, L):
    return lambda y: y + (L / 4) * (np.abs(2 * y - 1) ** (beta + 1) - 1) / (beta + 1)


def test_uniform_piecewise_truth():
    t = make_truth(TruthSpec("piecewise", {"p": 2, "splits": [[0, 1]], "weights": [1, 1]}))
    x = np.random.default_rng(0).random((20, 2))
    assert np.allclose(t(x), 1.0)
    assert best_approximation_error(make_truth(TruthSpec("piecewise", {"p": 1})), 4) == 0.0


def test_linear_density_is_lipschitz_with_constant_L():
    for L in (0.3, 1.0, 1.9):
        t = holder_density(1.0, L)
        y = np.linspace(0, 1, 10_001).reshape(-1, 1)
        f = t(y)
        assert np.allclose(f, 1 + L * (y[:, 0] - 0.5))
        assert np.max(np.abs(np.diff(f)) / np.diff(y[:, 0])) == pytest.approx(L, rel=1e-9)
        assert integrate.quad(lambda v: t(np.array([[v]]))[0], 0, 1)[0] == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("beta", [1.0, 0.5, 0.2])
def test_holder_sampler_passes_ks(beta):
    t = holder_density(beta, 1.2)
    x = t.sample(100_000, seed=3)[:, 0]
    assert stats.kstest(x, _holder_cdf(beta, 1.2)).pvalue > 0.01


def test_bounded_variation_sampler_passes_ks():
    t = bounded_variation_density()
    cdf = lambda y: np.array([integrate.quad(lambda v: t(np.array([[v]]))[0], 0, yy, points=[1 / 3, 0.7])[0]
                              for yy in np.atleast_1d(y)])
    x = np.sort(t.sample(100_000, seed=4)[:, 0])
    grid = np.linspace(0, 1, 201)
    F = np.interp(x, grid, cdf(grid))
    assert stats.kstest(F, "uniform").pvalue > 0.01


def test_haar_truth_region_frequencies():
    t = haar_sparse_density(levels=5, decay=1.0, seed=2)
    f = t.piecewise
    x = t.sample(100_000, seed=5)
    obs = np.bincount(locate_many(f.partition, x), minlength=f.partition.size)
    assert stats.chisquare(obs, f.weights * len(x)).pvalue > 0.01
    assert np.all(f.heights > 0)


def test_piecewise_truth_region_frequencies_in_three_dimensions():
    f = piecewise_from_splits(3, [[0, 3], [1, 1], [0, 2]], [1, 2, 3, 4])
    t = TruthDensity.from_piecewise(f)
    x = t.sample(50_000, seed=0)
    obs = np.bincount(locate_many(f.partition, x), minlength=4)
    assert stats.chisquare(obs, f.weights * len(x)).pvalue > 0.01


def test_nominal_exponents():
    assert make_truth(TruthSpec("holder_1d", {"beta": 0.7})).nominal_r == 0.7
    assert make_truth(TruthSpec("bounded_variation_1d")).nominal_r == 1.0
    assert make_truth(TruthSpec("haar_sparse", {"decay": 1.5})).nominal_r == 1.5
    assert make_truth(TruthSpec("holder_1d", {"beta": 0.7}, nominal_r=0.5)).nominal_r == 0.5


@pytest.mark.parametrize("spec", [
    TruthSpec("holder_1d", {"beta": 1.5}),
    TruthSpec("holder_1d", {"L": 2.5}),
    TruthSpec("bounded_variation_1d", {"jumps": [[1.2, 0.1]]}),
    TruthSpec("bounded_variation_1d", {"L": 1.0, "jumps": [[0.5, -1.2]]}),
    TruthSpec("haar_sparse", {"levels": 0}),
    TruthSpec("mixed_holder"),
])
def test_invalid_parameters(spec):
    with pytest.raises(ArgumentError):
        make_truth(spec)


def test_truth_spec_from_mapping():
    s = TruthSpec.from_mapping({"family": "holder_1d", "params": {"beta": 0.5}, "nominal_r": 0.5})
    assert s == TruthSpec("holder_1d", {"beta": 0.5}, 0.5)
    with pytest.raises(ArgumentError):
        TruthSpec.from_mapping({"params": {}})


# -- best approximation -----------------------------------------------------------------

def _quad_error(t, q, weights):
    """Hellinger distance from t to the density with the given region masses, by adaptive quadrature."""
    total = 0.0
    for b, w in zip(q.regions, weights):
        lo, hi = b.bounds()
        h = w / (hi[0] - lo[0])
        total += integrate.quad(lambda v: (math.sqrt(t(np.array([[v]]))[0]) - math.sqrt(h)) ** 2,
                                lo[0], hi[0], points=[0.5] if lo[0] < 0.5 < hi[0] else None,
                                epsabs=1e-14, epsrel=1e-13)[0]
    return math.sqrt(total)


def _optimal_weights(t, q):
    roots = np.array([integrate.quad(lambda v: math.sqrt(t(np.array([[v]]))[0]), *(b.bounds()[0][0], b.bounds()[1][0]),
                                     epsabs=1e-14)[0] for b in q.regions])
    s = roots**2 / q.volumes()
    return s / s.sum()


@pytest.mark.parametrize("I", [1, 2, 3, 4])
def test_best_error_matches_quadrature_over_all_partitions(I):
    t = holder_density(1.0, 1.0)
    want = min(_quad_error(t, q, _optimal_weights(t, q)) for q in enumerate_partitions(I, 1))
    assert best_approximation_error(t, I) == pytest.approx(want, abs=1e-8)


def test_optimal_weights_beat_mass_matching_and_numerical_optimum():
    t = holder_density(1.0, 1.5)
    q = enumerate_partitions(3, 1)[0]
    w_opt = _optimal_weights(t, q)
    mass = np.array([integrate.quad(lambda v: t(np.array([[v]]))[0], b.bounds()[0][0], b.bounds()[1][0])[0]
                     for b in q.regions])
    assert _quad_error(t, q, w_opt) <= _quad_error(t, q, mass) + 1e-12
    res = optimize.minimize(lambda z: _quad_error(t, q, np.exp(z) / np.exp(z).sum()), np.zeros(3),
                            method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    assert _quad_error(t, q, w_opt) <= res.fun + 1e-9
    assert best_approximation_error(t, 3, weights="mass") >= best_approximation_error(t, 3)


def test_best_error_of_linear_density_decays_like_inverse_size():
    t = holder_density(1.0, 1.0)
    sizes = [2, 4, 8, 16, 32]
    fit = fit_rate_exponent([(I, best_approximation_error(t, I)) for I in sizes])
    assert -1.2 <= fit.slope <= -0.8


def test_best_error_vanishes_for_exact_piecewise_truth():
    f = piecewise_from_splits(1, [[0, 1], [1, 1]], [0.5, 0.2, 0.3])
    t = TruthDensity.from_piecewise(f)
    assert best_approximation_error(t, 2) > 0
    for I in (3, 4, 7):
        assert best_approximation_error(t, I) == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("truth", [holder_density(1.0, 1.0), holder_density(0.5, 1.0),
                                   bounded_variation_density(), haar_sparse_density(levels=6)],
                         ids=["lipschitz", "holder-half", "bv", "haar"])
def test_best_error_decreasing(truth):
    errs = [best_approximation_error(truth, I) for I in range(1, 25)]
    assert np.all(np.diff(errs) <= 1e-12)


@pytest.mark.parametrize("truth", [holder_density(1.0, 1.0), bounded_variation_density()], ids=["lipschitz", "bv"])
def test_scaled_error_stays_in_a_band(truth):
    scaled = [best_approximation_error(truth, I) * I**truth.nominal_r for I in (2, 4, 8, 16, 32, 64)]
    assert max(scaled) / min(scaled) < 2.0


def test_holder_upper_band_only_for_rough_truths():
    # a single cusp is approximated faster than I^-beta by adaptive partitions
    t = holder_density(0.5, 1.0)
    scaled = [best_approximation_error(t, I) * I**t.nominal_r for I in (2, 4, 8, 16, 32, 64)]
    assert max(scaled) < 0.1
    assert np.all(np.diff(scaled) < 0)


def test_best_error_rejects_higher_dimensions():
    t = TruthDensity.from_piecewise(PiecewiseDensity.uniform(2))
    with pytest.raises(UnsupportedError):
        best_approximation_error(t, 3)
    with pytest.raises(ArgumentError):
        best_approximation_error(holder_density(), 0)


def test_regular_partition():
    q = regular_partition(2, 2)
    assert q.size == 16
    assert np.all(q.volumes() == 1 / 16)
