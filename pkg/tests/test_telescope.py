import itertools
from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from paraprod.errors import AdmissibilityViolation, EmptyRange
from paraprod.grid import Grid, Signal
from paraprod.paraproduct import pairing, paraproduct_type1
from paraprod.telescope import (
    FORM_LABELS,
    AdmissibleForm,
    base_window,
    check_admissible,
    check_identity,
    disjointness_certificate,
    dropped_term_certificates,
    dropped_term_value,
    evaluate_decomposition,
    is_small_branch,
    m_of_j,
    m_prime_of_j,
    original_pairing,
    removed_block_support,
    telescope_decompose,
    truncation_certificates,
)
from paraprod.windows import ParamSet

from conftest import random_signal

params_st = st.builds(ParamSet, L1=st.integers(1, 3), L2=st.integers(1, 3), M1=st.integers(-3, 3),
                      M2=st.integers(-3, 3), n1=st.integers(-4, 4), n2=st.integers(-4, 4))


def decompose(p, g):
    try:
        return telescope_decompose(p, g)
    except EmptyRange:
        assume(False)


def batch(g, rng, B):
    return [random_signal(g, rng) for _ in range(B)]


def test_m_examples():
    p = ParamSet()
    assert all(m_of_j(p, j) == 6 and m_prime_of_j(p, j) == 6 for j in range(-5, 6))
    q = ParamSet(L2=2)
    assert m_of_j(q, 3) == 4  # [(6 - 3 + 6) / 2]
    assert m_prime_of_j(q, 3) == 9


@given(params_st, st.integers(-20, 20))
def test_m_floor_semantics(p, j):
    num = (p.L2 * j + p.M2) - (p.L1 * j + p.M1) + 6
    assert m_of_j(p, j) == math.floor(Fraction(num, p.L2))
    assert m_prime_of_j(p, j) == math.floor(Fraction(num, p.L1))
    # the re-indexing k <= m(i + k) <=> k <= m'(i) used by the block sums
    for k in range(0, 30):
        assert (k <= m_of_j(p, j + k)) == (k <= m_prime_of_j(p, j))


def test_small_branch_single_form():
    g = Grid(11)
    p = ParamSet(M2=-6)
    dec = telescope_decompose(p, g)
    assert dec.large_js == [] and dec.small_js
    assert [f.label for f in dec.nonempty_forms] == ["small_omega2_case"]
    # the third symbol is flat on -(w1 + w2)
    form = dec.nonempty_forms[0]
    for i in form.js:
        c, d = p.dilation(1, i), p.dilation(2, i)
        xi = np.linspace(-(2 * c + d), -(c / 2 - d), 101)
        np.testing.assert_allclose(form.symbol_values(p, 3, i, xi), 1.0)
    rng = np.random.default_rng(0)
    chk = check_identity(dec, batch(g, rng, 5), batch(g, rng, 5), batch(g, rng, 5))
    assert chk.ok


def test_form_count_invariant_under_M_shift():
    g = Grid(12)
    counts = {len(telescope_decompose(ParamSet(M1=a, M2=b), g).forms)
              for a, b in itertools.product(range(-2, 3), repeat=2)}
    assert counts == {len(FORM_LABELS)}
    shifted = {len(telescope_decompose(ParamSet(M1=s, M2=s), g).forms) for s in (-3, 0, 3)}
    assert shifted == {6} and 6 <= 8


def test_identity_50_triples():
    g = Grid(10)
    p = ParamSet(n1=2, n2=-1)
    rng = np.random.default_rng(1)
    dec = telescope_decompose(p, g)
    f1s, f2s, f3s = batch(g, rng, 50), batch(g, rng, 50), batch(g, rng, 50)
    chk = check_identity(dec, f1s, f2s, f3s)
    assert chk.ok and dec.residual_bound < 1e-8
    # independent left side through the paraproduct module
    lhs = pairing(paraproduct_type1(f1s[0], f2s[0], p, dec.j_range), f3s[0])
    assert abs(lhs - chk.lhs[0]) <= 1e-10 * max(1, abs(lhs))


@given(params_st, st.integers(0, 2**31))
def test_identity_property(p, seed):
    g = Grid(10)
    rng = np.random.default_rng(seed)
    dec = decompose(p, g)
    chk = check_identity(dec, batch(g, rng, 3), batch(g, rng, 3), batch(g, rng, 3))
    assert chk.ok
    assert len(dec.forms) == 6


def test_mixed_branch_identity():
    g = Grid(11)
    p = ParamSet(L1=2)  # small branch for j > 3, large branch below
    dec = telescope_decompose(p, g)
    assert dec.mixed_branch
    rng = np.random.default_rng(4)
    assert check_identity(dec, batch(g, rng, 4), batch(g, rng, 4), batch(g, rng, 4)).ok


@settings(max_examples=10)
@given(params_st)
def test_dropped_terms_vanish(p):
    g = Grid(10)
    dec = decompose(p, g)
    certs = dropped_term_certificates(dec)
    assert all(ok for _, ok in certs)
    rng = np.random.default_rng(0)
    f1s, f2s, f3s = batch(g, rng, 2), batch(g, rng, 2), batch(g, rng, 2)
    scale = np.prod([np.linalg.norm(f.samples) for f in (f1s[0], f2s[0], f3s[0])]) * g.spacing
    for j, _ in certs[:4]:
        assert np.abs(dropped_term_value(dec, j, f1s, f2s, f3s)).max() <= 1e-10 * scale


def test_certificate_detects_overlap():
    g = Grid(10)
    p = ParamSet()
    assert not disjointness_certificate(p, g, [(1.0, ("f1", 4))], [(1.0, ("f2", 4))], [(1.0, ("f3", 4))])
    assert disjointness_certificate(p, g, [(1.0, ("f1", 6))], [(1.0, ("f2t", 0))], [(1.0, ("f3", 0))])


@given(params_st)
def test_truncation_certificates(p):
    dec = decompose(p, Grid(11))
    assert all(c[-1] for c in truncation_certificates(dec))


@given(params_st, st.integers(-3, 8))
def test_block_support_fact(p, j):
    # the low part of the first-input block lives in [0, 2^-2 * 2^(L2 j + M2)]
    if is_small_branch(p, j):
        return
    r = p.L2 // p.L1
    kmax = m_prime_of_j(p, j) - 10 - r
    for k in range(0, kmax + 1):
        lo, hi = base_window(p, ("f1", j + k))
        assert 0 <= lo and hi <= 2.0 ** (p.exponent(2, j) - 2)


def test_removed_support_coefficientwise():
    g = Grid(14)
    p = ParamSet(M1=-6)
    dec = telescope_decompose(p, g)
    form = next(f for f in dec.forms if f.label == "Lambda12")
    checked = 0
    for i in form.js:
        xi = removed_block_support(dec, "Lambda12", i)
        if xi.size:
            assert xi.min() >= 0 and xi.max() <= 2.0 ** (p.exponent(2, i) - 2)
            checked += 1
    assert checked


def test_admissible_forced_failure():
    p = ParamSet()
    bad = AdmissibleForm("forced", [3], {3: ([(1.0, ("f2", 3))], [(1.0, ("f2", 3))], [(1.0, ("f3", 3))])}, (1, 2))
    rep = check_admissible(bad, p, raise_on_fail=False)
    assert not rep.ok and any("vanish" in f for f in rep.failures)
    with pytest.raises(AdmissibilityViolation):
        check_admissible(bad, p)


@pytest.mark.parametrize("L1", [1, 2, 3])
def test_upper_family_lacunarity(L1):
    p = ParamSet(L1=L1)
    js = [0, 1, 2, 3]
    form = AdmissibleForm("upper", js, {i: ([(1.0, ("f1", i))], [(1.0, ("f2t", i)), (-1.0, ("f2t", i - 1))],
                                            [(1.0, ("f3", i))]) for i in js}, (1, 2))
    rep = check_admissible(form, p)
    assert rep.lacunarity[1] == 2.0**-L1


@settings(max_examples=15)
@given(params_st)
def test_every_emitted_form_admissible(p):
    dec = decompose(p, Grid(10))
    for f in dec.forms:
        rep = check_admissible(f, p)
        assert rep.ok


def test_derivative_constants_reported():
    p = ParamSet(n1=3)
    dec = telescope_decompose(p, Grid(10))
    rep = check_admissible(dec.forms[1], p, derivatives=True)
    assert rep.deriv_constants and all(np.isfinite(v) for d in rep.deriv_constants.values() for v in d.values())


def test_decomposition_json():
    dec = telescope_decompose(ParamSet(), Grid(10))
    d = dec.to_json()
    assert [f["label"] for f in d["forms"]] == list(FORM_LABELS)
    assert dec.dumps() == dec.dumps()


def test_evaluate_parts_sum_to_original():
    g = Grid(10)
    p = ParamSet(M2=-2)
    rng = np.random.default_rng(9)
    fs = [Signal(g, random_signal(g, rng).samples) for _ in range(3)]
    dec = telescope_decompose(p, g)
    parts = evaluate_decomposition(dec, *fs)
    total = sum(parts.values())
    lhs = original_pairing(dec, *fs)
    assert np.abs(total - lhs).max() <= 1e-8 * max(1, np.abs(lhs).max())
