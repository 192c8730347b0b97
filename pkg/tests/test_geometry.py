import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tddsim.exceptions import ParameterError, TopologyError
from tddsim.geometry import (
    UNSERVED,
    PointSet,
    Region,
    associate,
    distance,
    distance_matrix,
    sample_ppp,
)


def test_zero_intensity_gives_empty_set(rng):
    assert len(sample_ppp(0.0, Region(1600), rng)) == 0


@pytest.mark.parametrize("bad", [-1e-4, math.inf, math.nan])
def test_bad_intensity_rejected(bad, rng):
    with pytest.raises(ParameterError):
        sample_ppp(bad, Region(100), rng)


def test_points_inside_region(rng):
    pts = sample_ppp(1e-3, Region(300), rng).positions
    assert pts.shape[1] == 2
    assert np.all((pts >= 0) & (pts < 300))


def test_default_density_mean_count(rng):
    # lambda_s = 1e-4 on a 1.6 km square -> 256 expected SAPs
    counts = [len(sample_ppp(1e-4, Region(1600), rng)) for _ in range(2000)]
    sigma = math.sqrt(256 / len(counts))
    assert abs(np.mean(counts) - 256) < 3 * sigma


def test_small_region_mean_within_three_sigma(rng):
    counts = np.array([len(sample_ppp(1e-3, Region(100), rng)) for _ in range(10_000)])
    assert abs(counts.mean() - 10) < 3 * math.sqrt(10 / counts.size)
    assert abs(counts.var(ddof=1) - 10) < 0.5  # Poisson: variance equals mean


def test_ppp_seeded_is_reproducible():
    a = sample_ppp(1e-3, Region(200), np.random.default_rng(3)).positions
    b = sample_ppp(1e-3, Region(200), np.random.default_rng(3)).positions
    assert a.tobytes() == b.tobytes()


def ppp_chi_square_pvalue(counts, mean):
    """Goodness of fit of integer counts to Poisson(mean), tail bins merged to >= 5 expected."""
    n = len(counts)
    hi = int(stats.poisson.ppf(0.999, mean))
    edges = list(range(0, hi + 1))
    observed = [np.sum(counts == k) for k in edges[:-1]] + [np.sum(counts >= edges[-1])]
    expected = [n * stats.poisson.pmf(k, mean) for k in edges[:-1]] + [n * stats.poisson.sf(edges[-1] - 1, mean)]
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    obs[-1] += acc_o
    exp[-1] += acc_e
    return stats.chisquare(obs, exp).pvalue


def test_ppp_counts_chi_square(rng):
    counts = np.array([len(sample_ppp(1e-3, Region(100), rng)) for _ in range(10_000)])
    assert ppp_chi_square_pvalue(counts, 10.0) > 0.01


def test_distance_examples():
    r = Region(1600)
    assert distance((5.0, 7.0), (5.0, 7.0), r) == 0
    assert distance((0, 0), (3, 4), r) == pytest.approx(5.0)
    assert distance((0, 0), (1599, 0), r) == pytest.approx(1.0)


def brute_torus_distance(a, b, side):
    return min(math.hypot(a[0] - b[0] + i * side, a[1] - b[1] + j * side)
               for i in (-1, 0, 1) for j in (-1, 0, 1))


coord = st.floats(0, 999.999, allow_nan=False)


@given(coord, coord, coord, coord)
def test_distance_matches_nine_images(ax, ay, bx, by):
    r = Region(1000)
    d = distance((ax, ay), (bx, by), r)
    assert d == pytest.approx(brute_torus_distance((ax, ay), (bx, by), 1000), abs=1e-9)
    assert d == pytest.approx(distance((bx, by), (ax, ay), r), abs=1e-12)


def test_distance_matrix_agrees_with_scalar(rng):
    r = Region(500)
    a = rng.uniform(0, 500, (7, 2))
    b = rng.uniform(0, 500, (5, 2))
    m = distance_matrix(a, b, r)
    for i in range(7):
        for j in range(5):
            assert m[i, j] == pytest.approx(distance(a[i], b[j], r), rel=1e-12)


def test_associate_single_pair():
    r = Region(100)
    topo = associate(PointSet([(10, 10)], "SAP"), PointSet([(20, 20)], "UE"), 3, r)
    assert topo.served == ((0,),)
    assert topo.tagged_sap.tolist() == [0]


def test_associate_cap():
    r = Region(1000)
    ues = PointSet([(10 * (i + 1), 0) for i in range(5)], "UE")
    topo = associate(PointSet([(0, 0)], "SAP"), ues, 3, r)
    assert len(topo.served[0]) == 3
    assert len(topo.unserved) == 2
    assert topo.n_candidates.tolist() == [5]
    # the three nearest are kept
    assert sorted(topo.served[0]) == [0, 1, 2]


def test_associate_nearest():
    r = Region(1000)
    topo = associate(PointSet([(0, 0), (100, 0)], "SAP"), PointSet([(30, 0)], "UE"), 1, r)
    assert topo.tagged_sap.tolist() == [0]


def test_associate_tie_goes_to_lower_index():
    r = Region(1000)
    topo = associate(PointSet([(0, 0), (100, 0)], "SAP"), PointSet([(50, 0)], "UE"), 1, r)
    assert topo.tagged_sap.tolist() == [0]


def test_associate_cap_tie_goes_to_lower_ue_index():
    r = Region(1000)
    ues = PointSet([(0, 10), (10, 0), (0, -10)], "UE")
    topo = associate(PointSet([(0, 0)], "SAP"), ues, 2, r)
    assert topo.served[0] == (0, 1)


def test_associate_errors():
    r = Region(100)
    with pytest.raises(TopologyError):
        associate(PointSet(np.empty((0, 2)), "SAP"), PointSet([(1, 1)], "UE"), 3, r)
    with pytest.raises(ParameterError):
        associate(PointSet([(0, 0)], "SAP"), PointSet([(1, 1)], "UE"), 0, r)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k_s=st.integers(1, 5))
def test_association_invariants(seed, k_s):
    rng = np.random.default_rng(seed)
    r = Region(300)
    saps = sample_ppp(1e-4, r, rng, "SAP")
    ues = sample_ppp(5e-4, r, rng, "UE")
    if len(saps) == 0:
        return
    topo = associate(saps, ues, k_s, r)
    d = distance_matrix(ues.positions, saps.positions, r)
    seen = set()
    for s, served in enumerate(topo.served):
        assert len(served) <= k_s
        for u in served:
            assert u not in seen
            seen.add(u)
            assert topo.tagged_sap[u] == s
            assert d[u, s] <= d[u].min()
    assert len(seen) + len(topo.unserved) == len(ues)
    assert np.all(topo.tagged_sap[topo.unserved] == UNSERVED)
    assert topo.n_candidates.sum() == len(ues)
