import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from adapart.density import PiecewiseDensity
from adapart.partition import BinaryPartition, split

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_partition(I, p, rng):
    """A size-I partition built by uniformly random splits (not uniform over partitions)."""
    q = BinaryPartition.unit(p)
    for _ in range(I - 1):
        q = split(q, int(rng.integers(q.size)), int(rng.integers(1, p + 1)))
    return q


def random_density(I, p, rng, floor=0.0):
    q = random_partition(I, p, rng)
    w = rng.dirichlet(np.ones(I)) + floor
    return PiecewiseDensity(q, w / w.sum())


@st.composite
def partitions(draw, max_size=8, dims=(1, 2, 3)):
    p = draw(st.sampled_from(dims))
    I = draw(st.integers(1, max_size))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_partition(I, p, np.random.default_rng(seed))


@st.composite
def density_pairs(draw, max_size=6, dims=(1, 2), floor=0.0):
    p = draw(st.sampled_from(dims))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    a = random_density(draw(st.integers(1, max_size)), p, rng, floor)
    b = random_density(draw(st.integers(1, max_size)), p, rng, floor)
    return a, b


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pooled_chisquare_pvalue(obs, expected, min_expected=5.0):
    """Chi-square goodness of fit after pooling cells with small expected counts."""
    from scipy import stats
    obs, expected = np.asarray(obs, float), np.asarray(expected, float)
    keep = expected >= min_expected
    o, e = list(obs[keep]), list(expected[keep])
    if (~keep).any():
        o.append(obs[~keep].sum())
        e.append(expected[~keep].sum())
    o, e = np.array(o), np.array(e)
    return stats.chisquare(o, e * o.sum() / e.sum()).pvalue


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
