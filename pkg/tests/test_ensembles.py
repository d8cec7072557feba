import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critmf.ensembles import (
    EnsembleSpec, InvalidSpec, Kind, crbrme_variance, element_abs_sum, intermediate_denominator,
    round_up_congruent, sample,
)


def test_cm_r_entries_small():
    m = sample(EnsembleSpec(Kind.CM_R, 0.1, 3), 1, 0).entries
    assert m[0, 2] == pytest.approx(-0.05j)
    assert m[2, 0] == pytest.approx(0.05j)
    assert m[0, 1] == pytest.approx(-0.1j)


def test_rs_unitary_n4():
    m = sample(EnsembleSpec(Kind.RS, 0.5, 4), 123, 7).entries
    assert np.max(np.abs(m @ m.conj().T - np.eye(4))) < 1e-12


def test_intermediate_unitary_and_congruence():
    m = sample(EnsembleSpec(Kind.INTERMEDIATE, 1 / 3, 10), 5, 0).entries
    assert np.max(np.abs(m @ m.conj().T - np.eye(10))) < 1e-10
    with pytest.raises(InvalidSpec, match="mod 3"):
        EnsembleSpec(Kind.INTERMEDIATE, 1 / 3, 12)
    assert intermediate_denominator(1 / 3) == 3
    assert intermediate_denominator(0.3) is None
    assert round_up_congruent(12, 3) == 13
    assert round_up_congruent(13, 3) == 13


@pytest.mark.parametrize("kind,kw", [
    (Kind.CM_R, {}), (Kind.CM_H, {"mu": 1.0}), (Kind.CM_T, {"mu": 1.0}), (Kind.CM_T, {"mu": "2pi/N"}),
    (Kind.CRBRME, {"beta": 1}), (Kind.CRBRME, {"beta": 2}),
])
def test_hermitian_exactly(kind, kw):
    m = sample(EnsembleSpec(kind, 0.7, 33, **kw), 9, 3).entries
    assert np.array_equal(m, m.conj().T)


@pytest.mark.parametrize("n", [64, 513, 4096])
def test_rs_unitary_large(n):
    m = sample(EnsembleSpec(Kind.RS, 0.3, n), 0, 0).entries
    assert np.max(np.abs(m @ m.conj().T - np.eye(n))) < 1e-10


def test_reproducible_and_distinct_streams():
    spec = EnsembleSpec(Kind.CM_R, 0.2, 20)
    a = sample(spec, 42, 3).entries
    assert np.array_equal(a, sample(spec, 42, 3).entries)
    assert not np.array_equal(a, sample(spec, 42, 4).entries)
    assert not np.array_equal(a, sample(spec, 43, 3).entries)
    assert sample(spec, 42, 3).seed_path == (42, 3)


def test_common_disorder_across_g():
    d1 = np.diag(sample(EnsembleSpec(Kind.CM_R, 0.1, 16), 8, 2).entries)
    d2 = np.diag(sample(EnsembleSpec(Kind.CM_R, 0.5, 16), 8, 2).entries)
    assert np.array_equal(d1, d2)


def test_crbrme_variance_monte_carlo():
    # pool the (m, m+1) entries of many samples to reach ~1e5 draws
    spec = EnsembleSpec(Kind.CRBRME, 1.0, 201, beta=2)
    draws = np.concatenate([np.abs(np.diag(sample(spec, 11, r).entries, 1)) ** 2 for r in range(500)])
    assert draws.size == 100000
    target = 0.5 / (1 + 1.0)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - target) < 3 * se
    assert crbrme_variance(1.0, np.array([1]))[0] == pytest.approx(0.25)


def test_crbrme_diagonal_variance():
    for beta in (1, 2):
        spec = EnsembleSpec(Kind.CRBRME, 2.0, 100, beta=beta)
        d = np.concatenate([np.diag(sample(spec, 3, r).entries).real for r in range(300)])
        assert d.var() == pytest.approx(1.0 / beta, rel=0.05)
    m = sample(EnsembleSpec(Kind.CRBRME, 2.0, 30, beta=1), 0, 0).entries
    assert np.all(m.imag == 0)


@pytest.mark.parametrize("kwargs,match", [
    ({"kind": Kind.CM_H, "g": 1.0, "n": 8}, "requires mu"),
    ({"kind": Kind.CM_R, "g": 1.0, "n": 8, "mu": 1.0}, "only meaningful"),
    ({"kind": Kind.CRBRME, "g": 1.0, "n": 8}, "beta"),
    ({"kind": Kind.CM_R, "g": 1.0, "n": 1}, ">= 2"),
    ({"kind": Kind.CM_T, "g": 1.0, "n": 8, "mu": 3.7}, "pi N/\\(N-1\\)"),
])
def test_invalid_specs(kwargs, match):
    with pytest.raises(InvalidSpec, match=match):
        EnsembleSpec(**kwargs)


def test_integer_coupling_flagged():
    s = sample(EnsembleSpec(Kind.RS, 1.0, 8), 0, 0)
    assert s.flags
    m = s.entries
    # a phased permutation: one unimodular entry per row
    assert np.allclose(np.sort(np.abs(m), axis=1)[:, -1], 1.0)
    assert np.max(np.abs(m @ m.conj().T - np.eye(8))) < 1e-12


def test_element_abs_sum_examples():
    assert element_abs_sum(EnsembleSpec(Kind.CM_R, 1.0, 4)) == pytest.approx(13 / 6, rel=1e-14)
    assert element_abs_sum(EnsembleSpec(Kind.CM_R, 1.0, 2)) == pytest.approx(1.0)


def test_element_abs_sum_log_slope():
    sizes = [2 ** k for k in range(8, 15)]
    y = [element_abs_sum(EnsembleSpec(Kind.CM_R, 1.0, n)) / 2.0 for n in sizes]
    slope = np.polyfit(np.log(sizes), y, 1)[0]
    assert abs(slope - 1.0) < 0.05


def test_element_abs_sum_matches_sample_for_deterministic_kinds():
    for spec in (EnsembleSpec(Kind.RS, 0.3, 17), EnsembleSpec(Kind.CM_T, 0.5, 17, mu=1.0)):
        m = sample(spec, 0, 0).entries
        off = np.abs(m).sum() - np.abs(np.diag(m)).sum()
        assert element_abs_sum(spec) == pytest.approx(off / spec.n, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(g=st.floats(0.01, 3.0), n=st.integers(2, 40), seed=st.integers(0, 2 ** 63), r=st.integers(0, 1000))
def test_property_unitarity(g, n, seed, r):
    m = sample(EnsembleSpec(Kind.RS, g, n), seed, r).entries
    assert np.max(np.abs(m @ m.conj().T - np.eye(n))) < 1e-10


@settings(max_examples=25, deadline=None)
@given(g=st.floats(-2.0, 2.0), n=st.integers(2, 40), seed=st.integers(0, 2 ** 63))
def test_property_hermiticity(g, n, seed):
    m = sample(EnsembleSpec(Kind.CM_R, g, n), seed, 0).entries
    assert np.array_equal(m, m.conj().T)
