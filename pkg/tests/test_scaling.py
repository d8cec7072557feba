import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critmf.moments import MomentRecord, solvable_records
from critmf.scaling import (
    DimensionEstimate, FitError, fit_all, fit_dimension, fit_g_slope, symmetry_residuals,
)

SIZES = [2 ** k for k in range(8, 13)]


def _rec(q, n, mean, g=0.1, std=0.0, r=1, kind="CM_r"):
    return MomentRecord(kind, g, None, None, q, n, r, mean, std, 1 / 16, 1)


def test_pure_power_law():
    recs = [_rec(2.0, n, n ** (-(2.0 - 1) * 0.7)) for n in SIZES]
    est = fit_dimension(recs)
    assert est.dq == pytest.approx(0.7, abs=1e-12)
    assert abs(est.c) < 1e-8
    assert est.delta == pytest.approx((0.7 - 1) * 1.0)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-4, 4), c=st.floats(-50, 50), q=st.floats(-3, 4).filter(lambda q: abs(q - 1) > 0.05))
def test_round_trip(a, b, c, q):
    recs = [_rec(q, n, math.exp(a + b * math.log(n) + c / n)) for n in SIZES]
    est = fit_dimension(recs)
    assert est.a == pytest.approx(a, abs=1e-10)
    assert est.b == pytest.approx(b, abs=1e-10)
    assert est.c == pytest.approx(c, abs=1e-7)
    assert est.dq == pytest.approx(-b / (q - 1), abs=1e-9)


def test_d0_is_one():
    recs = [_rec(0.0, n, float(n) * 0.5, std=0.0) for n in SIZES]
    est = fit_dimension(recs)
    assert est.dq == pytest.approx(1.0, abs=1e-12)
    assert est.delta == pytest.approx(0.0, abs=1e-12)


def test_solvable_fit_examples():
    recs = solvable_records(0.5, [-1.0, 4.0], SIZES)
    est = {e.q: e for e in fit_all(recs)}
    assert abs(est[-1.0].dq - 1.5) < 0.05
    assert abs(est[4.0].dq) < 0.05


def test_weighted_error_reporting():
    rng = np.random.default_rng(1)
    recs = []
    for n in SIZES:
        m = n ** -0.6 * (1 + 0.01 * rng.normal())
        recs.append(_rec(1.6, n, m, std=0.05 * m, r=100))
    est = fit_dimension(recs)
    assert est.dq_err >= est.dq_err_scatter > 0
    assert est.dq == pytest.approx(1.0, abs=0.1)


def test_fit_errors():
    with pytest.raises(FitError, match=">= 3"):
        fit_dimension([_rec(2.0, 64, 1.0), _rec(2.0, 128, 1.0)])
    with pytest.raises(FitError, match="q = 1"):
        fit_dimension([_rec(1.0, n, 1.0) for n in SIZES])
    with pytest.raises(FitError, match="positive"):
        fit_dimension([_rec(2.0, n, -1.0) for n in SIZES])
    with pytest.raises(FitError, match="mix"):
        fit_dimension([_rec(2.0, 64, 1.0), _rec(3.0, 128, 1.0), _rec(2.0, 256, 1.0)])


def test_fit_all_skips_q_one():
    recs = [_rec(q, n, n ** (-(q - 1) * 0.5)) for q in (0.5, 1.0, 2.0) for n in SIZES]
    assert sorted(e.q for e in fit_all(recs)) == [0.5, 2.0]


def test_g_slope_synthetic():
    n, q = 1025, 0.25
    recs = [_rec(q, n, 3.0 * g ** (2 * q) * n ** (1 - 2 * q), g=g) for g in np.geomspace(1e-4, 1e-2, 6)]
    fit = fit_g_slope(recs)
    assert fit.slope == pytest.approx(2 * q, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    recs0 = [_rec(0.0, n, float(n), g=g) for g in (1e-3, 2e-3, 4e-3)]
    assert fit_g_slope(recs0).slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(FitError):
        fit_g_slope(recs[:2])
    with pytest.raises(FitError, match="q < 1/2"):
        fit_g_slope([_rec(0.7, n, 1.0, g=g) for g in (1, 2, 3)])


def _est(q, dq, err=0.01, g=0.1):
    return DimensionEstimate("RS", g, q, dq, err, 0.0, 0.0, 0.0, 5)


def test_symmetric_weak_curve():
    t = 0.1
    qs = np.round(np.arange(-2, 3.01, 0.25), 9)
    ests = []
    for q in qs:
        if q == 1:
            continue
        delta = -t * q * (q - 1)
        ests.append(_est(q, 1 + delta / (q - 1)))
    rep = symmetry_residuals(ests)
    assert np.allclose(rep.residual, 0, atol=1e-12)
    assert rep.verdict == "consistent" and rep.consistent_fraction == 1.0
    assert rep.residual[list(rep.q).index(0.5)] == 0.0
    assert np.array_equal(rep.residual, -rep.residual[::-1])


def test_asymmetric_curve_flagged():
    qs = [-1.0, -0.5, 0.0, 0.5, 1.5, 2.0]
    ests = [_est(q, 0.5 + 0.2 * q if q != 0 else 1.0, err=1e-3) for q in qs]
    rep = symmetry_residuals(ests)
    assert rep.verdict == "inconsistent"
    assert rep.max_abs_residual > 0
    assert np.any(rep.excess(1.5, 2.0) > 0)


def test_unpaired_grid_rejected():
    with pytest.raises(FitError, match="partner"):
        symmetry_residuals([_est(-1.0, 1.0), _est(0.0, 1.0), _est(2.5, 1.0)])
