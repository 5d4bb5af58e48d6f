import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdcscreen.dcor import pairwise_distances, pdcor
from pdcscreen.lagged import Panel, build_lagged, cond_materialize, cond_pdcsis
from pdcscreen.screening import (
    GroupPartition,
    Method,
    ScreenConfig,
    dcsis_stats,
    default_top_d,
    group_dcsis_stats,
    group_pdcsis_stats,
    group_triples,
    mms,
    pdcsis_plus_stats,
    pdcsis_stats,
    rank_and_select,
    screen,
    sis_stats,
)
from pdcscreen.simulate import ModelSpec, gen_model, gen_model6


def small_ds(seed=0, T=60, m=5, h=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((T, m))
    y = np.r_[0.0, X[:-1, 0]] + 0.5 * rng.standard_normal(T)
    return build_lagged(Panel(y, X), h)


def naive_pdcsis(ds, kind):
    dy = pairwise_distances(ds.y_resp)
    out = []
    for j in range(ds.p):
        k, l = ds.series_lag(j)
        dz = cond_materialize(ds, cond_pdcsis(k, l, ds.h, ds.m, ds.n_resp_lags))
        out.append(pdcor(dy, pairwise_distances(ds.Z[:, j]), dz, kind))
    return np.array(out)


@pytest.mark.parametrize("kind", ["u", "v"])
def test_pdcsis_matches_naive(kind):
    ds = small_ds()
    res = pdcsis_stats(ds, ScreenConfig("pdcsis", estimator=kind))
    np.testing.assert_allclose(res.stats, naive_pdcsis(ds, kind), atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(0, 3))
def test_cache_vs_naive_property(seed, h, q):
    ds = build_lagged(Panel(*_panel(seed)), h, n_resp_lags=min(q, h))
    res = pdcsis_stats(ds, ScreenConfig("pdcsis"))
    np.testing.assert_allclose(res.stats, naive_pdcsis(ds, "u"), atol=1e-9)


def _panel(seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(40), rng.standard_normal((40, 3))


def test_dcsis_matches_naive():
    ds = small_ds(1)
    dy = pairwise_distances(ds.y_resp)
    for kind in ("u", "v"):
        want = [pdcor(dy, pairwise_distances(ds.Z[:, j]), None, kind) for j in range(ds.p)]
        np.testing.assert_allclose(dcsis_stats(ds, kind), want, atol=1e-12)


def test_sis_matches_corrcoef():
    ds = small_ds(2)
    want = [abs(np.corrcoef(ds.y_resp, ds.Z[:, j])[0, 1]) for j in range(ds.p)]
    np.testing.assert_allclose(sis_stats(ds), want, atol=1e-12)


def test_sis_constant_column_scores_zero():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((30, 3))
    X[:, 1] = 0.7
    ds = build_lagged(Panel(rng.standard_normal(30), X), 2)
    s = sis_stats(ds)
    assert s[1] == 0.0 and s[4] == 0.0


def test_empty_conditioning_reduces_to_dcsis():
    ds = small_ds(4)
    for kind in ("u", "v"):
        a = pdcsis_stats(ds, ScreenConfig("pdcsis", estimator=kind, condition=False))
        np.testing.assert_array_equal(a.stats, dcsis_stats(ds, kind))
    ds0 = build_lagged(Panel(*_panel(5)), 1, n_resp_lags=0)
    np.testing.assert_array_equal(pdcsis_stats(ds0).stats, dcsis_stats(ds0, "u"))


def test_plus_cap_zero_equals_pdcsis():
    ds = small_ds(6)
    a = pdcsis_plus_stats(ds, ScreenConfig("pdcsis-plus", plus_cap=0))
    b = pdcsis_stats(ds, ScreenConfig("pdcsis"))
    np.testing.assert_array_equal(a.stats, b.stats)
    np.testing.assert_array_equal(a.ranking, b.ranking)


def test_plus_matches_naive_conditioning():
    ds = small_ds(7)
    cfg = ScreenConfig("pdcsis-plus", plus_threshold=0.05, plus_cap=3)
    res = pdcsis_plus_stats(ds, cfg)
    m = ds.m
    dy = pairwise_distances(ds.y_resp)
    strong = []
    for l in range(2, ds.h + 1):
        prev = res.stats[(l - 2) * m:(l - 1) * m]
        hits = [j for j in np.argsort(-np.abs(prev), kind="stable") if abs(prev[j]) >= 0.05][:3]
        strong.extend(sorted(int(j) + (l - 2) * m for j in hits))
        assert list(res.strong_sets[l - 2]) == sorted(int(j) + (l - 2) * m for j in hits)
        for k in range(m):
            cols = list(dict.fromkeys(strong + [(ll - 1) * m + k for ll in range(1, l)]))
            dz = pairwise_distances(np.column_stack([ds.y_lags, ds.Z[:, cols]]))
            want = pdcor(dy, pairwise_distances(ds.Z[:, (l - 1) * m + k]), dz, "u")
            assert res.stats[(l - 1) * m + k] == pytest.approx(want, abs=1e-10)


def test_plus_decoy_threshold_is_seeded():
    ds = small_ds(8)
    cfg = ScreenConfig("pdcsis-plus", decoy_count=200)
    a = pdcsis_plus_stats(ds, cfg, np.random.default_rng(1))
    b = pdcsis_plus_stats(ds, cfg, np.random.default_rng(1))
    assert a.threshold_used == b.threshold_used and 0 < a.threshold_used < 1
    np.testing.assert_array_equal(a.stats, b.stats)


def test_rank_ties_by_index():
    ranking, sel = rank_and_select([0.5, -0.9, 0.5, 0.9, 0.1], top_d=3)
    assert ranking.tolist() == [1, 3, 0, 2, 4]
    assert sel.tolist() == [1, 3, 0]
    _, sel = rank_and_select([0.5, -0.9, 0.2], threshold=0.5)
    assert sel.tolist() == [1, 0]


def test_mms():
    assert mms([4, 2, 0, 1, 3], [2, 0]) == 3
    with pytest.raises(ValueError):
        mms([0, 1], [])


def test_default_top_d():
    assert default_top_d(200) == math.ceil(200 / math.log(200)) == 38


def test_method_coerce_and_defaults():
    assert Method.coerce("PDC-SIS+") is Method.PDCSIS_PLUS
    assert ScreenConfig("pdcsis").estimator.value == "u"
    assert ScreenConfig("dcsis").estimator.value == "v"
    with pytest.raises(ValueError):
        ScreenConfig("pdcsis", decoy_quantile=0.0)
    with pytest.raises(ValueError):
        ScreenConfig("pdcsis", decoy_quantile=1.0)
    with pytest.raises(ValueError):
        screen(small_ds(), ScreenConfig("group-pdcsis"))


def _same_order(a, b):
    np.testing.assert_allclose(a.stats, b.stats, atol=1e-8)
    # orderings are compared only where values are clearly separated
    gaps = np.diff(np.abs(a.stats)[a.ranking])
    if np.all(np.abs(gaps) > 1e-7):
        np.testing.assert_array_equal(a.ranking, b.ranking)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0.2, 5), min_size=5, max_size=5),
       st.lists(st.floats(-10, 10), min_size=5, max_size=5), st.floats(0.2, 5))
def test_affine_invariance_of_ranking(seed, scales, shifts, common):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((50, 5))
    y = np.r_[0.0, np.tanh(X[:-1, 1])] + rng.standard_normal(50)
    sign = np.where(np.arange(5) % 2, -1.0, 1.0)
    ref = build_lagged(Panel(y, X), 2)
    # marginal screeners: any per-column affine map
    moved = build_lagged(Panel(3 * y - 1, X * (np.array(scales) * sign) + np.array(shifts)), 2)
    for method in ("sis", "dcsis"):
        _same_order(screen(ref, ScreenConfig(method)), screen(moved, ScreenConfig(method)))
    # conditioning vectors mix series, so only a shared scale keeps their geometry
    moved = build_lagged(Panel(common * y + 2, common * X * sign + np.array(shifts)), 2)
    _same_order(screen(ref, ScreenConfig("pdcsis")), screen(moved, ScreenConfig("pdcsis")))


def naive_group(X, part, h, kind, conditional):
    n = X.shape[0] - h
    block = lambda g, lag: pairwise_distances(X[h - lag:h - lag + n, part.members(g)])
    out = []
    for i, lag, j in group_triples(part.e, h):
        dz = block(i, 1) if conditional else None
        out.append(pdcor(block(i, 0), block(j, lag), dz, kind))
    return np.array(out)


@pytest.mark.parametrize("conditional,kind", [(True, "u"), (True, "v"), (False, "v"), (False, "u")])
def test_group_stats_match_naive(conditional, kind):
    X = np.random.default_rng(9).standard_normal((40, 12))
    part = GroupPartition.equal(12, 3)
    fn = group_pdcsis_stats if conditional else group_dcsis_stats
    res = fn(X, part, 2, kind)
    np.testing.assert_allclose(res.stats, naive_group(X, part, 2, kind, conditional), atol=1e-10)


def test_group_triples_count():
    t = group_triples(25, 2)
    assert len(t) == 25 * 2 * 25 - 25 == 1225
    assert not any(i == j and lag == 1 for i, lag, j in t)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.permutations(range(4)))
def test_group_permutation_invariance(seed, gperm):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((30, 12))
    part = GroupPartition.equal(12, 3)
    base = group_pdcsis_stats(X, part, 2)
    # shuffle series inside each group
    within = np.concatenate([rng.permutation(part.members(g)) for g in range(4)])
    np.testing.assert_allclose(group_pdcsis_stats(X[:, within], part, 2).stats, base.stats, atol=1e-10)
    # relabel groups: triple (i, l, j) becomes (pi(i), l, pi(j))
    new_assign = np.array(gperm)[part.assignment]
    relab = group_pdcsis_stats(X, GroupPartition(new_assign), 2)
    idx = relab.triple_index([(gperm[i], l, gperm[j]) for i, l, j in base.triples])
    np.testing.assert_allclose(relab.stats[idx], base.stats, atol=1e-10)


def test_group_partition_validation():
    with pytest.raises(ValueError):
        GroupPartition(np.array([0, 2, 2]))
    p = GroupPartition.from_groups([[2, 0], [1]])
    assert p.members(0).tolist() == [0, 2]


def test_model_truth_detected_on_easy_design():
    panel, truth = gen_model(ModelSpec(5, m=20, n=300), seed=0)
    res = screen(build_lagged(panel, 3), ScreenConfig("pdcsis"))
    assert mms(res.ranking, truth) <= 10


def test_group_truth_detected():
    X, truth, part = gen_model6(m=100, seed=1, n=300)
    res = group_pdcsis_stats(X, part, 2)
    ranks = np.empty_like(res.ranking)
    ranks[res.ranking] = np.arange(1, res.ranking.size + 1)
    assert ranks[res.triple_index(truth)].max() <= 10
