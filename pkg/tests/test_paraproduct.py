import numpy as np
import pytest
from hypothesis import given, strategies as st

from paraprod.classic import Mollifier
from paraprod.grid import Grid, MeasurableSet, Signal
from paraprod.paraproduct import (
    TrilinearFormSpec,
    band_project,
    form_spec,
    pairing,
    paraproduct,
    paraproduct_type1,
    paraproduct_type2,
    shift_amount,
    translate,
    translate_by,
    trilinear_pair,
    truncated_trilinear,
    type2_condition,
    untruncated_sec5,
)
from paraprod.windows import ParamSet, j_values, symbol_array, window_of

from conftest import direct_convolution, random_signal


def idft_matrix(n):
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / n


def oracle_paraproduct(f1, f2, params, context):
    """Per-j direct convolutions with explicitly synthesized kernels."""
    g = f1.grid
    W = idft_matrix(g.size)
    out = np.zeros(g.size, dtype=complex)
    for j in j_values(params, g, context):
        k1 = W @ symbol_array(params, 1, j, g, context=context)
        k2 = W @ symbol_array(params, 2, j, g, context=context)
        out += direct_convolution(f1.samples, k1) * direct_convolution(f2.samples, k2)
    return out


def test_band_project_trivial(rng):
    g = Grid(9)
    p = ParamSet()
    assert not np.any(band_project(Signal.zeros(g), p, 1, 3).samples)
    tone = Signal(g, np.exp(2j * np.pi * 2 * g.x))  # inside [-4, 4], flat region of the j=3 wide bump
    np.testing.assert_allclose(band_project(tone, p, 2, 3, 0).samples, tone.samples, atol=1e-13)


def test_band_project_direct_oracle(rng):
    g = Grid(8)
    p = ParamSet(n1=3)
    f = random_signal(g, rng)
    kern = idft_matrix(g.size) @ symbol_array(p, 1, 4, g)
    ref = direct_convolution(f.samples, kern)
    got = band_project(f, p, 1, 4).samples
    assert np.abs(got - ref).max() <= 1e-10 * np.abs(ref).max()


def test_type1_zero_and_single_j(rng):
    g = Grid(10)
    p = ParamSet(n1=1, n2=-2)
    f1, f2 = random_signal(g, rng), random_signal(g, rng)
    assert not np.any(paraproduct_type1(Signal.zeros(g), f2, p).samples)
    one = paraproduct_type1(f1, f2, p, j_range=(3, 3)).samples
    ref = band_project(f1, p, 1, 3).samples * band_project(f2, p, 2, 3).samples
    np.testing.assert_allclose(one, ref, atol=1e-14)


@pytest.mark.parametrize("context", ["pi_type1", "pi_type2"])
def test_direct_oracle_K10(rng, context):
    g = Grid(10)
    p = ParamSet(M2=-1, n1=2, n2=-1, m=2)
    f1, f2 = random_signal(g, rng), random_signal(g, rng)
    got = paraproduct(f1, f2, p, context).samples
    ref = oracle_paraproduct(f1, f2, p, context)
    assert np.linalg.norm(got - ref) <= 1e-9 * np.linalg.norm(ref)


def test_type2_m0_cross_implementation(rng):
    g = Grid(10)
    p = ParamSet(M2=2)
    f1, f2 = random_signal(g, rng), random_signal(g, rng)
    got = paraproduct_type2(f1, f2, p).samples
    ref = sum(band_project(f1, p, 1, j, 1, "pi_type2").samples * band_project(f2, p, 2, j, 1, "pi_type2").samples
              for j in j_values(p, g, "pi_type2"))
    assert np.abs(got - ref).max() <= 1e-10 * np.abs(ref).max()
    assert not np.any(paraproduct_type2(f1, Signal.zeros(g), p).samples)


def minkowski_support(p, g, context):
    """Integer frequencies reachable as a sum of the two symbol supports, any j."""
    reach = np.zeros(g.size, dtype=bool)
    for j in j_values(p, g, context):
        a = np.flatnonzero(symbol_array(p, 1, j, g, context=context))
        b = np.flatnonzero(symbol_array(p, 2, j, g, context=context))
        reach[(a[:, None] + b[None, :]).ravel() % g.size] = True
    return reach


@pytest.mark.parametrize("context,m", [("pi_type1", 0), ("pi_type2", 3)])
def test_output_spectrum_support(rng, context, m):
    g = Grid(10)
    p = ParamSet(M2=1, m=m)
    out = paraproduct(random_signal(g, rng), random_signal(g, rng), p, context)
    reach = minkowski_support(p, g, context)
    spec = np.abs(out.spectrum)
    assert spec[~reach].max(initial=0) <= 1e-12 * spec.max()


def test_type2_condition_reported():
    g = Grid(12)
    assert type2_condition(ParamSet(M2=5, m=5), g)
    assert not type2_condition(ParamSet(M2=0, m=1), g)


@pytest.mark.parametrize("M2", [0, -5])
def test_duality_with_third_symbol(rng, M2):
    g = Grid(11)
    p = ParamSet(M2=M2, n1=1, n2=2)
    f1, f2, f3 = (random_signal(g, rng) for _ in range(3))
    js = j_values(p, g, "pi_type1")
    lhs = trilinear_pair(f1, f2, f3, form_spec(p, g, "lambda_sec4", (js[0], js[-1])))
    rhs = pairing(paraproduct_type1(f1, f2, p), f3)
    assert abs(lhs - rhs) <= 1e-9 * abs(rhs)


def test_trilinear_zero_input(rng):
    g = Grid(9)
    p = ParamSet()
    spec = form_spec(p, g)
    f = random_signal(g, rng)
    assert trilinear_pair(f, Signal.zeros(g), f, spec) == 0


def test_fourier_disjointness_vanishes(rng):
    g = Grid(11)
    p = ParamSet()
    j = 5  # omega_1 = [16, 64]
    spec = form_spec(p, g, "lambda_sec4", (j, j))
    k = g.frequencies

    def band(lo, hi):
        s = np.where((k >= lo) & (k <= hi), rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size), 0)
        return Signal.from_spectrum(g, s * g.size)

    f1, f2, f3 = band(16, 64), band(-4, 4), band(1, 200)
    # supp f1 + supp f2 lies in [12, 68]; -supp f3 lies in [-200, -1]
    scale = np.prod([np.linalg.norm(f.samples) for f in (f1, f2, f3)]) * g.spacing
    assert abs(trilinear_pair(f1, f2, f3, spec)) <= 1e-10 * scale
    f3b = band(-200, -1)
    assert abs(trilinear_pair(f1, f2, f3b, spec)) > 1e-3 * scale


def test_spec_validation():
    with pytest.raises(ValueError):
        TrilinearFormSpec([1, 2], (np.zeros((2, 8)),) * 2)
    with pytest.raises(ValueError):
        TrilinearFormSpec([1], (np.zeros((2, 8)),) * 3)


def test_translate_identity_and_roundtrip(rng):
    g = Grid(10)
    p = ParamSet(m=3)
    f = random_signal(g, rng)
    assert translate(f, p, 3, 2).signal.samples.tobytes() == f.samples.tobytes()
    t = shift_amount(p, 1, 2)
    assert t == 2.0 ** (3 - 2)
    there = translate_by(f, 37 * g.spacing).signal
    back = translate_by(there, -37 * g.spacing).signal
    assert back.samples.tobytes() == f.samples.tobytes()
    tr = translate_by(f, 0.3 * g.spacing)
    assert tr.samples_shifted == 0 and tr.residual == pytest.approx(0.3 * g.spacing)


def test_tilde_amounts():
    p = ParamSet(M2=2, m=1)
    a1 = shift_amount(p, 1, 3, "Tr")
    a2 = shift_amount(p, 2, 3, "Tr")
    assert shift_amount(p, 1, 3, "Tr_tilde") == a1 - a2
    assert shift_amount(p, 2, 3, "Tr_tilde") == 0
    assert shift_amount(p, 3, 3, "Tr_tilde") == -a2


@pytest.mark.parametrize("mode", ["nearest", "exact"])
def test_modulated_projection_is_translation(rng, mode):
    g = Grid(10)
    p = ParamSet(m=2)
    f = random_signal(g, rng)
    for ell in (1, 2):
        for j in (1, 3):  # shifts 2^(2-j) are lattice multiples at K=10
            mod = band_project(f, p, ell, j, "power_2m", "pi_type2").samples
            base = band_project(f, p, ell, j, 0, "pi_type2")
            tr = translate(base, p, ell, j, "Tr", mode=mode)
            assert tr.residual == 0
            np.testing.assert_allclose(tr.signal.samples, mod, atol=1e-10 * np.abs(mod).max())


def test_exact_translation_off_lattice(rng):
    g = Grid(9)
    f = random_signal(g, rng, band=40)
    t = 0.123456
    got = translate_by(f, t, "exact").signal.samples
    k = np.arange(-40, 41)
    coef = f.spectrum[k % g.size] / g.size
    ref = np.exp(2j * np.pi * np.outer(g.x + t, k)) @ coef
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_truncated_empty_omega(rng):
    g = Grid(10)
    p = ParamSet(M2=3, m=1)
    fs = [random_signal(g, rng) for _ in range(3)]
    r = truncated_trilinear(*fs, p, MeasurableSet.empty(g))
    assert r.untruncated == pytest.approx(untruncated_sec5(*fs, p))
    assert abs(r.difference) <= 1e-8 * max(1.0, abs(r.untruncated))


def _deep_case(K, seed=0):
    g = Grid(K)
    rng = np.random.default_rng(seed)
    omega = MeasurableSet(g, (g.x > 0.05) & (g.x < 0.95))
    inside = (g.x > 0.45) & (g.x < 0.55)
    f1, f2, f3 = (random_signal(g, rng, g.size // 5) for _ in range(3))
    return g, omega, f1, f2, Signal(g, f3.samples * inside)


def test_truncated_deep_omega_decay():
    # with a mollifier of moderate width the deep-inside form is negligible
    p = ParamSet(M2=5)
    g, omega, f1, f2, f3 = _deep_case(12)
    r = truncated_trilinear(f1, f2, f3, p, omega, (2, 4), Mollifier(0.5))
    assert abs(r.value) <= 1e-6 * abs(r.untruncated)


def test_truncated_decay_default_mollifier_improves_with_K():
    # the default mollifier spreads over ~100 * 2^-k_j, so decay is only measured
    p = ParamSet(M2=5)
    ratios = []
    for K, jr in ((12, (2, 4)), (14, (4, 6))):
        g, omega, f1, f2, f3 = _deep_case(K)
        r = truncated_trilinear(f1, f2, f3, p, omega, jr)
        ratios.append(abs(r.value) / abs(r.untruncated))
    print("truncated/untruncated:", ratios)
    assert ratios[1] < ratios[0] < 1


bil_params = st.builds(ParamSet, M2=st.integers(-3, 3), n1=st.integers(-4, 4), n2=st.integers(-4, 4),
                       m=st.integers(0, 3))


@given(bil_params, st.integers(0, 2**31), st.complex_numbers(max_magnitude=10, allow_nan=False),
       st.sampled_from(["pi_type1", "pi_type2"]), st.integers(0, 1))
def test_bilinearity(p, seed, a, context, slot):
    g = Grid(9)
    rng = np.random.default_rng(seed)
    f, h, other = (random_signal(g, rng) for _ in range(3))
    b = 1.5 - 0.5j

    def op(x):
        args = (x, other) if slot == 0 else (other, x)
        return paraproduct(*args, p, context).samples

    lhs = op(f * a + h * b)
    rhs = a * op(f) + b * op(h)
    assert np.abs(lhs - rhs).max() <= 1e-11 * max(1.0, np.abs(rhs).max(), abs(a) * np.abs(op(f)).max())


@given(st.integers(-3, 3), st.integers(0, 2**31))
def test_spectrum_support_property(M2, seed):
    g = Grid(9)
    p = ParamSet(M2=M2)
    rng = np.random.default_rng(seed)
    out = paraproduct_type1(random_signal(g, rng), random_signal(g, rng), p)
    spec = np.abs(out.spectrum)
    assert spec[~minkowski_support(p, g, "pi_type1")].max(initial=0) <= 1e-12 * max(spec.max(), 1e-300)


@given(st.integers(0, 511), st.integers(0, 2**31))
def test_translation_covariance(shift, seed):
    g = Grid(9)
    p = ParamSet(M2=-1)
    rng = np.random.default_rng(seed)
    f1, f2 = random_signal(g, rng), random_signal(g, rng)
    a = paraproduct_type1(Signal(g, np.roll(f1.samples, shift)), Signal(g, np.roll(f2.samples, shift)), p).samples
    b = np.roll(paraproduct_type1(f1, f2, p).samples, shift)
    assert np.abs(a - b).max() <= 1e-11 * np.abs(b).max()
