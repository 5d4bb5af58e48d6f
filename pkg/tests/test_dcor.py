import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from pdcscreen import _kernel as K
from pdcscreen.dcor import (
    EstimatorKind,
    dcor_v,
    dcov2_v,
    dcov_terms,
    double_centered,
    pairwise_distances,
    pdcor,
    pdcor_from_r2,
    rstar,
    u_inner,
    ucentered,
)

V, U = EstimatorKind.V_STATISTIC, EstimatorKind.U_CENTERED


def random_instance(rng):
    n = int(rng.integers(4, 31))
    dims = rng.integers(1, 4, size=3)
    return [rng.standard_normal((n, d)) * rng.uniform(0.5, 3) for d in dims]


def close(actual, expected, tol):
    """Relative agreement; the absolute floor only matters for exact zeros."""
    np.testing.assert_allclose(actual, expected, rtol=tol, atol=1e-13)


def check_instance(x, y, z, tol=1e-10):
    da, db, dc = (pairwise_distances(s) for s in (x, y, z))
    oa, ob, oc = (oracles.distance_matrix(s.tolist()) for s in (x, y, z))
    close(da, oa, tol)
    close(dcov2_v(da, db), oracles.dcov2_triple(oa, ob), tol)
    close(dcov_terms(da, db).dcov2, oracles.dcov2_triple(oa, ob), tol)
    close(dcor_v(da, db), np.sqrt(oracles.dcor2_v(oa, ob)), tol)
    close(ucentered(da), oracles.ucenter(oa), tol)
    close(u_inner(da, db), oracles.uinner(oracles.ucenter(oa), oracles.ucenter(ob)), tol)
    close(rstar(da, db), oracles.rstar(oa, ob), tol)
    close(pdcor(da, db, dc, U), oracles.pdcor_projection(oa, ob, oc), tol)
    close(pdcor(da, db, dc, V), oracles.pdcor_v(oa, ob, oc), tol)
    # summary-based fast path used by the screeners
    for kind in (V, U):
        sa, sb, sc = (K.summarize(d, kind) for d in (da, db, dc))
        close(float(K.partial(sa, sb, sc, kind)), pdcor(da, db, dc, kind), tol)


def test_oracle_suite_fifty_instances_fast():
    rng = np.random.default_rng(20240611)
    start = time.perf_counter()
    for _ in range(50):
        check_instance(*random_instance(rng))
    assert time.perf_counter() - start < 10.0


def test_double_centering_zero_margins():
    d = pairwise_distances(np.random.default_rng(0).standard_normal((9, 2)))
    a = double_centered(d)
    np.testing.assert_allclose(a.sum(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(a.sum(axis=1), 0, atol=1e-12)


def test_ucentered_rows_sum_to_zero():
    d = pairwise_distances(np.random.default_rng(1).standard_normal((8, 3)))
    a = ucentered(d)
    np.testing.assert_allclose(a.sum(axis=1), 0, atol=1e-12)
    assert np.all(np.diag(a) == 0)


def test_ucentered_requires_four_points():
    with pytest.raises(ValueError, match="n >= 4"):
        ucentered(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        pdcor(np.zeros((3, 3)), np.zeros((3, 3)), kind="u")


def test_constant_variable_has_zero_dcor():
    d0 = pairwise_distances(np.ones(10))
    d1 = pairwise_distances(np.arange(10.0))
    assert dcor_v(d0, d1) == 0.0
    assert rstar(d0, d1) == 0.0
    assert pdcor(d1, d1, d0, "v") == pytest.approx(1.0)


def test_identical_variables():
    d = pairwise_distances(np.random.default_rng(2).standard_normal(12))
    assert dcor_v(d, d) == pytest.approx(1.0)
    assert rstar(d, d) == pytest.approx(1.0)


def test_conditioning_on_itself_gives_zero():
    rng = np.random.default_rng(3)
    dx, dy = pairwise_distances(rng.standard_normal(15)), pairwise_distances(rng.standard_normal(15))
    assert pdcor(dx, dy, dx, "u") == 0.0
    assert pdcor(dx, dy, dy, "v") == 0.0


def test_empty_conditioning_is_marginal():
    rng = np.random.default_rng(4)
    dx, dy = pairwise_distances(rng.standard_normal(15)), pairwise_distances(rng.standard_normal(15))
    assert pdcor(dx, dy, None, "v") == dcor_v(dx, dy)
    assert pdcor(dx, dy, None, "u") == rstar(dx, dy)


def test_pdcor_from_r2_degenerate_denominator():
    assert pdcor_from_r2(0.3, 1.0, 0.2) == 0.0
    np.testing.assert_array_equal(pdcor_from_r2(np.array([0.5, 0.5]), np.array([0.0, 1.0]), 0.0), [0.5, 0.0])


def test_nonfinite_input_names_row():
    x = np.ones((5, 2))
    x[3, 1] = np.nan
    with pytest.raises(ValueError, match="row 3"):
        pairwise_distances(x)


def test_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        dcov2_v(np.zeros((4, 4)), np.zeros((5, 5)))


def test_estimator_kind_coerce():
    assert EstimatorKind.coerce("U") is U
    assert EstimatorKind.coerce("v_statistic") is V
    with pytest.raises(ValueError):
        EstimatorKind.coerce("w")


samples = st.integers(5, 20).flatmap(
    lambda n: st.tuples(*[arrays(float, (n, d), elements=st.floats(-50, 50, allow_nan=False, width=64))
                          for d in (1, 2, 1)]))


@settings(max_examples=60, deadline=None)
@given(samples)
def test_symmetry(xyz):
    x, y, z = xyz
    dx, dy, dz = (pairwise_distances(s) for s in (x, y, z))
    assert dcor_v(dx, dy) == pytest.approx(dcor_v(dy, dx), abs=1e-12)
    assert rstar(dx, dy) == pytest.approx(rstar(dy, dx), abs=1e-12)
    for kind in ("u", "v"):
        assert pdcor(dx, dy, dz, kind) == pytest.approx(pdcor(dy, dx, dz, kind), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(samples, st.floats(0.1, 10), st.floats(-100, 100))
def test_scale_shift_invariance(xyz, scale, shift):
    x, y, z = xyz
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3 or np.ptp(z) < 1e-3:
        return
    dx, dy, dz = (pairwise_distances(s) for s in (x, y, z))
    dx2 = pairwise_distances(scale * x + shift)
    assert dcor_v(dx2, dy) == pytest.approx(dcor_v(dx, dy), abs=1e-8)
    assert rstar(dx2, dy) == pytest.approx(rstar(dx, dy), abs=1e-8)
    assert pdcor(dx2, dy, dz, "u") == pytest.approx(pdcor(dx, dy, dz, "u"), abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(samples)
def test_ranges(xyz):
    x, y, z = xyz
    dx, dy, dz = (pairwise_distances(s) for s in (x, y, z))
    assert 0.0 <= dcor_v(dx, dy) <= 1.0
    assert -1.0 <= rstar(dx, dy) <= 1.0
    assert dcov2_v(dx, dy) >= 0.0
