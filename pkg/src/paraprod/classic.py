"""Classical operators used by the tile machinery.

Smoothing is periodic and discrete: convolution of sample arrays a, b is
``spacing * ifft(fft(a) * fft(b))``, which approximates the continuum
integral and is exact for band-limited data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.ndimage import maximum_filter1d

from .errors import ScaleOutOfRange
from .grid import Grid, MeasurableSet, Signal
from .windows import ParamSet, WIDE, _smoothstep, scale_indices, symbol_array

E_DEFAULT = 200
E_BIG = 400


def convolve(a, b, grid: Grid) -> np.ndarray:
    return grid.spacing * np.fft.ifft(np.fft.fft(a) * np.fft.fft(b))


# mollifier


@dataclass(frozen=True)
class Mollifier:
    """psi = |phi|^2 with phi-hat a bump of half-width beta/2; psi-hat lives in [-beta, beta].

    ``kernel(grid, k)`` returns psi_k = 2^k psi(2^k x) sampled on the grid and
    normalised so that spacing * sum(psi_k) = 1.
    """

    beta: float = 0.01

    def kernel(self, grid: Grid, k: int) -> np.ndarray:
        return _mollifier_kernel(self.beta, grid, int(k))

    def spectrum_support(self, k: int) -> float:
        return self.beta * math.ldexp(1.0, k)


@lru_cache(maxsize=512)
def _mollifier_kernel(beta, grid, k):
    half = beta * math.ldexp(1.0, k) / 2
    phi_hat = WIDE(grid.xi / half) if half > 0 else (grid.xi == 0).astype(float)
    phi = np.fft.ifft(phi_hat)
    psi = np.abs(phi) ** 2
    psi /= psi.sum() * grid.spacing
    psi.flags.writeable = False
    return psi


DEFAULT_MOLLIFIER = Mollifier()


def _check_k(grid: Grid, k: int):
    top = grid.log_size - math.log2(grid.period)
    if not (-math.log2(grid.period) - 1e-12 <= k <= top + 1e-12):
        raise ScaleOutOfRange(f"scale k={k} outside [{-math.log2(grid.period):g}, {top:g}] for this grid")


def interval_mask(grid: Grid, k: int, n: int) -> np.ndarray:
    """Cells [x_i, x_i + h) of I_{k,n} = [2^-k n, 2^-k (n+1)), reduced modulo the period."""
    w = math.ldexp(1.0, -k)
    lo = (n * w) % grid.period
    rel = (grid.x - lo) % grid.period
    return rel < w - 1e-12 * grid.period


# rational-kernel smoothing


def _G(t, E):
    """Integral of (1 + s^2)^-E over [0, t]."""
    t = np.asarray(t, dtype=float)
    u = t * t / (1.0 + t * t)
    return np.sign(t) * 0.5 * special.beta(0.5, E - 0.5) * special.betainc(0.5, E - 0.5, u)


def rational_bump(grid: Grid, k: int, runs, E: float = E_DEFAULT, images: int = 2) -> np.ndarray:
    """Integral over the union of [a, b) intervals of 2^k / (1 + 4^k |x - y|^2)^E dy, periodised."""
    s = math.ldexp(1.0, k)
    x = grid.x
    out = np.zeros(grid.size)
    for a, b in runs:
        for mimg in range(-images, images + 1):
            shift = mimg * grid.period
            out += _G(s * (x - a + shift), E) - _G(s * (x - b + shift), E)
    return out


def smoothed_indicator(grid: Grid, k: int, n: int, variant: str = "star", exponent: float = E_DEFAULT,
                       E_big: float = E_BIG, mollifier: Mollifier = DEFAULT_MOLLIFIER) -> Signal:
    _check_k(grid, k)
    if variant == "star":
        return Signal(grid, convolve(interval_mask(grid, k, n).astype(float), mollifier.kernel(grid, k), grid))
    w = math.ldexp(1.0, -k)
    lo = (n * w) % grid.period
    # center the interval near the middle of the period so images cover both sides
    runs = [(lo, lo + w)]
    if variant == "double_star":
        return Signal(grid, rational_bump(grid, k, runs, exponent))
    if variant == "tilde_star":
        return Signal(grid, rational_bump(grid, k, runs, E_big))
    raise ValueError(f"unknown variant {variant!r}")


def _runs_physical(S: MeasurableSet):
    h = S.grid.spacing
    return [(a * h, b * h) for a, b in S.runs()]


def shadow_indicator(shadow: MeasurableSet, k: int, variant: str = "star", exponent: float = E_DEFAULT,
                     mollifier: Mollifier = DEFAULT_MOLLIFIER) -> Signal:
    grid = shadow.grid
    _check_k(grid, k)
    if variant == "star":
        return Signal(grid, convolve(shadow.mask.astype(float), mollifier.kernel(grid, k), grid))
    if variant == "double_star":
        return Signal(grid, rational_bump(grid, k, _runs_physical(shadow), exponent))
    raise ValueError(f"unknown variant {variant!r}")


# maximal functions


def _maximal_array(a: np.ndarray) -> np.ndarray:
    """Uncentered maximal average of a nonnegative array over all periodic runs."""
    N = a.size
    c = np.concatenate(([0.0], np.cumsum(np.concatenate((a, a)))))
    out = a.astype(float).copy()
    for L in range(2, N + 1):
        means = (c[L:L + N] - c[:N]) / L  # run starting at s
        # points i covered by runs starting in [i - L + 1, i]
        np.maximum(out, maximum_filter1d(means, size=L, mode="wrap", origin=(L - 1) // 2), out=out)
    return out


def maximal(f: Signal) -> Signal:
    return Signal(f.grid, _maximal_array(np.abs(f.samples)))


def maximal_p(f: Signal, p: float) -> Signal:
    if p < 1:
        raise ValueError("p must be at least 1")
    return Signal(f.grid, _maximal_array(np.abs(f.samples) ** p) ** (1.0 / p))


def maximal_brute(values: np.ndarray) -> np.ndarray:
    """O(N^2)-runs reference: max over all periodic runs containing each point."""
    a = np.abs(np.asarray(values))
    N = a.size
    out = np.zeros(N)
    for s in range(N):
        total = 0.0
        for L in range(1, N + 1):
            total += a[(s + L - 1) % N]
            mean = total / L
            idx = (s + np.arange(L)) % N
            out[idx] = np.maximum(out[idx], mean)
    return out


# square functions


def square_function_from_symbols(f: Signal, symbols) -> Signal:
    bands = np.fft.ifft(f.spectrum[None, :] * np.asarray(symbols), axis=-1)
    return Signal(f.grid, np.sqrt(np.sum(np.abs(bands) ** 2, axis=0)))


def square_function(f: Signal, params: ParamSet, ell: int, j_range, modulation=None,
                    context: str = "pi_type1") -> Signal:
    lo, hi = j_range
    syms = [symbol_array(params, ell, j, f.grid, modulation, context) for j in range(lo, hi + 1)]
    return square_function_from_symbols(f, syms)


def partition_of_unity_symbols(grid: Grid, levels: int | None = None) -> np.ndarray:
    """Smooth dyadic bands whose squared moduli sum to one at every grid frequency."""
    a = np.abs(grid.xi) * grid.period
    if levels is None:
        levels = grid.log_size - 1

    def cut(t):
        return 1.0 - _smoothstep(t - 1.0)

    betas = [cut(a)]
    for j in range(1, levels + 1):
        betas.append(cut(a / 2**j) - cut(a / 2 ** (j - 1)))
    betas.append(1.0 - cut(a / 2**levels))
    return np.sqrt(np.clip(np.stack(betas), 0.0, None))


# dyadic BMO


def dyadic_bmo(f: Signal) -> float:
    """max over aligned dyadic blocks J of mean_J |f - mean_J f|."""
    v = f.samples
    best = 0.0
    for r in range(f.grid.log_size + 1):
        blocks = v.reshape(-1, 1 << r)
        dev = np.abs(blocks - blocks.mean(axis=1, keepdims=True)).mean(axis=1)
        best = max(best, float(dev.max()))
    return best


# exceptional set


@dataclass(frozen=True, eq=False)
class ExceptionalSet:
    omega: MeasurableSet
    C0: float
    measure: float
    retained: bool  # |F3 \ Omega| >= |F3| / 2

    def __repr__(self):
        return f"ExceptionalSet(C0={self.C0:g}, measure={self.measure:g}, retained={self.retained})"


@lru_cache(maxsize=64)
def _mpm_cached(mask_bytes, grid, p):
    mask = np.frombuffer(mask_bytes, dtype=bool)
    m1 = _maximal_array(mask.astype(float))
    return _maximal_array(m1**p) ** (1.0 / p)


def mp_of_maximal(F: MeasurableSet, p: float) -> np.ndarray:
    """M_p(M 1_F) as a sample array."""
    return _mpm_cached(F.mask.tobytes(), F.grid, float(p))


def _omega_for(sets, p, C0):
    grid = sets[0].grid
    mask = np.zeros(grid.size, dtype=bool)
    for F in sets:
        if F.measure == 0:
            continue
        mask |= mp_of_maximal(F, p) > C0 * F.measure ** (1.0 / p)
    return MeasurableSet(grid, mask)


def exceptional_set(F1: MeasurableSet, F2: MeasurableSet, F3: MeasurableSet, p: float, C0="auto",
                    max_doublings: int = 60) -> ExceptionalSet:
    if not p > 1:
        raise ValueError("p must exceed 1")
    sets = (F1, F2, F3)

    def build(c):
        om = _omega_for(sets, p, c)
        kept = (F3 - om).measure >= F3.measure / 2
        return ExceptionalSet(om, float(c), om.measure, bool(kept))

    if C0 != "auto":
        if not C0 > 0:
            raise ValueError("C0 must be positive")
        return build(C0)
    c = 1.0
    for _ in range(max_doublings):
        res = build(c)
        if res.retained:
            return res
        c *= 2
    raise RuntimeError("automatic C0 search did not converge")


# distance to the complement and the truncation weights


def distance_to_complement(omega: MeasurableSet) -> np.ndarray:
    """Periodic distance from each sample to the nearest sample outside omega (0 outside)."""
    grid = omega.grid
    N = grid.size
    comp = np.flatnonzero(~omega.mask)
    if comp.size == 0:
        return np.full(N, np.inf)
    ext = np.concatenate((comp - N, comp, comp + N))
    i = np.arange(N)
    pos = np.searchsorted(ext, i)
    left = ext[np.clip(pos - 1, 0, ext.size - 1)]
    right = ext[np.clip(pos, 0, ext.size - 1)]
    d = np.minimum(np.abs(i - left), np.abs(right - i))
    return d * grid.spacing


def distance_brute(omega: MeasurableSet) -> np.ndarray:
    grid = omega.grid
    N = grid.size
    comp = np.flatnonzero(~omega.mask)
    out = np.full(N, np.inf)
    for i in range(N):
        for c in comp:
            d = abs(i - c)
            out[i] = min(out[i], min(d, N - d) * grid.spacing)
    return out


@dataclass(frozen=True, eq=False)
class OmegaJ:
    omega_j: MeasurableSet
    psi: Signal  # 1_{(Omega_j)^c} smoothed at scale k_j
    k_j: int
    threshold: float

    def psi_star(self, exponent: float = E_DEFAULT) -> Signal:
        comp = self.omega_j.complement()
        return Signal(comp.grid, rational_bump(comp.grid, self.k_j, _runs_physical(comp), exponent))


def omega_j_and_psi(omega: MeasurableSet, params: ParamSet, j: int, epsilon=None, m=None,
                    mollifier: Mollifier | None = None, context: str = "lambda_sec5") -> OmegaJ:
    grid = omega.grid
    epsilon = params.epsilon if epsilon is None else epsilon
    m = params.m if m is None else m
    mollifier = DEFAULT_MOLLIFIER if mollifier is None else mollifier
    kj = scale_indices(params, j, context)[3]
    thr = 2.0 ** (epsilon**2 * m) * math.ldexp(1.0, -kj)
    dist = distance_to_complement(omega)
    oj = MeasurableSet(grid, omega.mask & (dist >= thr))
    psi = Signal(grid, convolve((~oj.mask).astype(float), mollifier.kernel(grid, kj), grid))
    return OmegaJ(oj, psi, kj, thr)
