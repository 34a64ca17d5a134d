"""Band projections, paraproducts and trilinear pairings on the periodic grid.

Every convolution is a diagonal product in frequency.  Sums over scales are
batched: the per-scale symbols are stacked into a (J, N) array and a single
inverse FFT produces all band projections at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, MeasurableSet, Signal, _check_same_grid
from .windows import (
    ParamSet,
    condition_2large1,
    j_values,
    symbol_array,
)


def band_project(f: Signal, params: ParamSet, ell: int, j: int, modulation=None,
                 context: str = "pi_type1") -> Signal:
    sym = symbol_array(params, ell, j, f.grid, modulation, context)
    return Signal.from_spectrum(f.grid, f.spectrum * sym)


def _stack(params, ell, js, grid, modulation, context):
    return np.stack([symbol_array(params, ell, j, grid, modulation, context) for j in js])


def band_stack(f: Signal, symbols: np.ndarray) -> np.ndarray:
    """Samples of f filtered by each row of ``symbols``; shape (J, N)."""
    return np.fft.ifft(f.spectrum[None, :] * symbols, axis=-1)


def paraproduct(f1: Signal, f2: Signal, params: ParamSet, context: str = "pi_type1",
                modulations=(None, None), j_range=None) -> Signal:
    """Sum over j of the pointwise product of the two band projections."""
    _check_same_grid(f1, f2)
    grid = f1.grid
    js = j_values(params, grid, context, j_range)
    g1 = band_stack(f1, _stack(params, 1, js, grid, modulations[0], context))
    g2 = band_stack(f2, _stack(params, 2, js, grid, modulations[1], context))
    return Signal(grid, np.einsum("jn,jn->n", g1, g2))


def paraproduct_type1(f1: Signal, f2: Signal, params: ParamSet, j_range=None) -> Signal:
    return paraproduct(f1, f2, params, "pi_type1", j_range=j_range)


def paraproduct_type2(f1: Signal, f2: Signal, params: ParamSet, j_range=None) -> Signal:
    return paraproduct(f1, f2, params, "pi_type2", j_range=j_range)


def type2_condition(params: ParamSet, grid: Grid, j_range=None) -> bool:
    """Whether (2large1) holds on every j of the type-2 range (reported, not enforced)."""
    return condition_2large1(params, j_values(params, grid, "pi_type2", j_range))


@dataclass
class TrilinearFormSpec:
    """Per-scale symbols for the three inputs.

    ``symbols[ell]`` is a (J, N) array in FFT order, one row per entry of
    ``js``.  ``weights``, if given, is a (J, N) array of sample-domain weights
    multiplying each scale's integrand.
    """

    js: list
    symbols: tuple
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = {np.shape(s) for s in self.symbols}
        if len(self.symbols) != 3 or len(shapes) != 1:
            raise ValueError("need three symbol stacks of one common shape")
        if next(iter(shapes))[0] != len(self.js):
            raise ValueError("symbol stacks must have one row per j")
        if self.weights is not None and np.shape(self.weights) != next(iter(shapes)):
            raise ValueError("weights must match the symbol stacks")


def form_spec(params: ParamSet, grid: Grid, context: str = "lambda_sec4", j_range=None,
              modulations=(None, None, None)) -> TrilinearFormSpec:
    js = j_values(params, grid, context, j_range)
    syms = tuple(_stack(params, ell, js, grid, modulations[ell - 1], context) for ell in (1, 2, 3))
    return TrilinearFormSpec(js, syms, meta={"context": context})


def trilinear_pair(f1: Signal, f2: Signal, f3: Signal, spec: TrilinearFormSpec) -> complex:
    """Quadrature of sum_j prod_ell (f_ell filtered by symbol_{ell,j}), no conjugation."""
    _check_same_grid(f1, f2, f3)
    prod = band_stack(f1, spec.symbols[0]) * band_stack(f2, spec.symbols[1]) * band_stack(f3, spec.symbols[2])
    if spec.weights is not None:
        prod = prod * spec.weights
    return complex(prod.sum() * f1.grid.spacing)


def pairing(g: Signal, f3: Signal) -> complex:
    """The bilinear integral of g * f3 (no conjugation)."""
    _check_same_grid(g, f3)
    return complex(np.sum(g.samples * f3.samples) * g.grid.spacing)


# translations


def shift_amount(params: ParamSet, ell: int, j: int, variant: str = "Tr", m=None) -> float:
    """Translation amount t with Tr(x) = x + t."""
    m = params.m if m is None else m

    def mj(l):
        return 0.0 if l == 3 else math.ldexp(1.0, m - params.exponent(l, j))

    if variant == "Tr":
        return mj(ell)
    if variant == "Tr_tilde":
        return {1: mj(1) - mj(2), 2: 0.0, 3: -mj(2)}[ell]
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True, eq=False)
class Translation:
    signal: Signal
    amount: float  # requested shift, reduced modulo the period
    samples_shifted: int | None  # integer sample shift in nearest mode
    residual: float  # amount actually missed (0 in exact mode)


def translate_by(f: Signal, t: float, mode: str = "nearest") -> Translation:
    """g(x) = f(x + t) on the torus."""
    grid = f.grid
    t = math.fmod(t, grid.period)
    if mode == "nearest":
        r = int(round(t / grid.spacing))
        resid = t - r * grid.spacing
        return Translation(Signal(grid, np.roll(f.samples, -r)), t, r, resid)
    if mode == "exact":
        phase = np.exp(2j * np.pi * grid.xi * t)
        return Translation(Signal.from_spectrum(grid, f.spectrum * phase), t, None, 0.0)
    raise ValueError(f"unknown mode {mode!r}")


def translate(f: Signal, params: ParamSet, ell: int, j: int, variant: str = "Tr", m=None,
              mode: str = "nearest") -> Translation:
    return translate_by(f, shift_amount(params, ell, j, variant, m), mode)


# truncated form of the type-2 pairing


@dataclass(frozen=True)
class TruncatedResult:
    value: complex
    untruncated: complex
    difference: complex
    js: tuple


def _translated_stacks(fs, params, grid, js, m):
    """f_{ell,j,0}(Tr~_{ell,j,m}(x)) for every ell and j; list of three (J, N) arrays."""
    out = []
    for ell, f in zip((1, 2, 3), fs):
        syms = _stack(params, ell, js, grid, 0, "lambda_sec5")
        t = np.array([shift_amount(params, ell, j, "Tr_tilde", m) for j in js])
        phase = np.exp(2j * np.pi * np.outer(t, grid.xi))
        out.append(np.fft.ifft(f.spectrum[None, :] * syms * phase, axis=-1))
    return out


def untruncated_sec5(f1: Signal, f2: Signal, f3: Signal, params: ParamSet, j_range=None) -> complex:
    grid = f1.grid
    js = j_values(params, grid, "lambda_sec5", j_range)
    a, b, c = _translated_stacks((f1, f2, f3), params, grid, js, params.m)
    return complex((a * b * c).sum() * grid.spacing)


def truncated_trilinear(f1: Signal, f2: Signal, f3: Signal, params: ParamSet, omega: MeasurableSet,
                        j_range=None, mollifier=None) -> TruncatedResult:
    """The Omega-truncated type-2 form, with its untruncated counterpart."""
    from .classic import omega_j_and_psi

    _check_same_grid(f1, f2, f3)
    grid = f1.grid
    js = j_values(params, grid, "lambda_sec5", j_range)
    a, b, c = _translated_stacks((f1, f2, f3), params, grid, js, params.m)
    base = a * b * c
    psi = np.stack([omega_j_and_psi(omega, params, j, params.epsilon, params.m, mollifier).psi.samples.real
                    for j in js])
    value = complex((psi**3 * base).sum() * grid.spacing)
    plain = complex(base.sum() * grid.spacing)
    return TruncatedResult(value, plain, value - plain, tuple(js))
