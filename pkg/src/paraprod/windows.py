"""Frequency windows, bump profiles and multiplier symbols.

Symbols are built frequency-domain first: every symbol is an analytic
profile evaluated at the grid's physical frequencies, so its Fourier
support is exact (true zeros outside the window).

Contexts select the window family:

``pi_type1`` / ``lambda_sec4``
    upper dyadic interval for the first input, symmetric interval for the
    second, and the two-case third window used for the dual pairing.
``pi_type2`` / ``lambda_sec5``
    annuli for the first two inputs (both built from the upper profile
    and modulated by 2**m), and the three-case third window.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np

from .errors import EmptyRange, NyquistOverflow
from .grid import Grid

CONTEXTS = ("pi_type1", "pi_type2", "lambda_sec4", "lambda_sec5")
TYPE2_CONTEXTS = ("pi_type2", "lambda_sec5")


@dataclass(frozen=True)
class ParamSet:
    L1: int = 1
    L2: int = 1
    M1: int = 0
    M2: int = 0
    n1: int = 0
    n2: int = 0
    m: int = 0
    epsilon: float = 0.25
    p: float = 1.5
    L_big: int = 8

    def __post_init__(self):
        for name in ("L1", "L2", "M1", "M2", "n1", "n2", "m", "L_big"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValueError(f"{name} must be an integer")
        if self.L1 < 1 or self.L2 < 1:
            raise ValueError("L1 and L2 must be positive")
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 1 < self.p < 2:
            raise ValueError("p must lie in (1, 2)")
        if self.L_big < 4:
            raise ValueError("L_big must be at least 4")

    def L(self, ell: int) -> int:
        return (self.L1, self.L2)[ell - 1]

    def M(self, ell: int) -> int:
        return (self.M1, self.M2)[ell - 1]

    def n(self, ell: int) -> int:
        return (self.n1, self.n2, 0)[ell - 1]

    def exponent(self, ell: int, j: int) -> int:
        """L_ell * j + M_ell, the log2 of the dilation for input ell at scale j."""
        return self.L(ell) * j + self.M(ell)

    def dilation(self, ell: int, j: int) -> float:
        return math.ldexp(1.0, self.exponent(ell, j))

    def replace(self, **changes) -> "ParamSet":
        d = asdict(self)
        d.update(changes)
        return ParamSet(**d)

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "ParamSet":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown ParamSet fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class Window:
    kind: str  # upper_dyadic | symmetric | annulus | negative_band
    lo: float
    hi: float
    j: int
    ell: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"degenerate window [{self.lo}, {self.hi}]")
        if self.kind == "annulus" and self.lo < 0:
            raise ValueError("annulus radii must be nonnegative")

    @property
    def measure(self) -> float:
        if self.kind == "annulus":
            return 2.0 * (self.hi - self.lo)
        return self.hi - self.lo

    @property
    def extent(self) -> float:
        """Largest |xi| in the window."""
        if self.kind == "annulus":
            return self.hi
        return max(abs(self.lo), abs(self.hi))

    @property
    def distance_to_origin(self) -> float:
        if self.kind == "annulus":
            return self.lo
        if self.lo <= 0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    def contains(self, xi) -> np.ndarray:
        xi = np.asarray(xi)
        if self.kind == "annulus":
            a = np.abs(xi)
            return (a >= self.lo) & (a <= self.hi)
        return (xi >= self.lo) & (xi <= self.hi)

    def to_json(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi, "j": self.j, "ell": self.ell}


def _smoothstep(t):
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t >= 1] = 1.0
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


@dataclass(frozen=True)
class BumpProfile:
    """Smooth profile supported on [a, b], identically one on [c, d]."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a < self.c <= self.d < self.b):
            raise ValueError(f"need a < c <= d < b, got {(self.a, self.b, self.c, self.d)}")

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def flat_region(self) -> tuple[float, float]:
        return (self.c, self.d)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        rise = _smoothstep((t - self.a) / (self.c - self.a))
        fall = _smoothstep((self.b - t) / (self.b - self.d))
        return rise * fall

    def scaled(self, s: float) -> "BumpProfile":
        return BumpProfile(self.a * s, self.b * s, self.c * s, self.d * s)


UPPER = BumpProfile(0.5, 2.0, 0.75, 1.5)
WIDE = BumpProfile(-1.0, 1.0, -0.5, 0.5)
# third-window profiles, in units of the relevant dilation
THIRD_NEG = BumpProfile(-19 / 8, -1 / 8, -9 / 4, -1 / 4)
THIRD_SYM = BumpProfile(-18.0, 18.0, -17.0, 17.0)
THIRD_RADIAL = BumpProfile(1 / 8, 19 / 8, 1 / 4, 9 / 4)


def make_bump(kind: str = "upper", a=None, b=None, c=None, d=None) -> BumpProfile:
    if kind == "upper":
        return UPPER
    if kind == "wide":
        return WIDE
    if kind == "custom":
        if None in (a, b, c, d):
            raise ValueError("custom bump needs a, b, c, d")
        return BumpProfile(float(a), float(b), float(c), float(d))
    raise ValueError(f"unknown bump kind {kind!r}")


def _check_context(context):
    if context not in CONTEXTS:
        raise ValueError(f"unknown context {context!r}; expected one of {CONTEXTS}")


def _third_case(params: ParamSet, j: int, context: str) -> str:
    e1, e2 = params.exponent(1, j), params.exponent(2, j)
    # 2^e2 < 2^e1 / 8  <=>  e2 < e1 - 3, exact in integers
    if context in TYPE2_CONTEXTS:
        if e2 < e1 - 3:
            return "first_dominant"
        if e1 < e2 - 3:
            return "second_dominant"
        return "comparable"
    return "small_second" if e2 < e1 - 3 else "large_second"


def window_of(params: ParamSet, ell: int, j: int, context: str = "pi_type1") -> Window:
    _check_context(context)
    if ell in (1, 2):
        s = params.dilation(ell, j)
        if context in TYPE2_CONTEXTS:
            return Window("annulus", s / 2, 2 * s, j, ell)
        if ell == 1:
            return Window("upper_dyadic", s / 2, 2 * s, j, ell)
        return Window("symmetric", -s, s, j, ell)
    if ell != 3:
        raise ValueError(f"ell must be 1, 2 or 3, got {ell}")
    c, d = params.dilation(1, j), params.dilation(2, j)
    case = _third_case(params, j, context)
    if case == "small_second":
        return Window("negative_band", -19 * c / 8, -c / 8, j, 3)
    if case == "large_second":
        return Window("symmetric", -18 * d, 18 * d, j, 3)
    if case == "first_dominant":
        return Window("annulus", c / 8, 19 * c / 8, j, 3)
    if case == "second_dominant":
        return Window("annulus", d / 8, 19 * d / 8, j, 3)
    big = max(c, d)
    return Window("symmetric", -18 * big, 18 * big, j, 3)


def default_modulation(params: ParamSet, ell: int, context: str) -> int:
    if ell == 3:
        return 0
    if context in TYPE2_CONTEXTS:
        return 1 << params.m
    return params.n(ell)


def symbol_values(params: ParamSet, ell: int, j: int, xi, modulation=None, context: str = "pi_type1") -> np.ndarray:
    """Evaluate the multiplier symbol at arbitrary physical frequencies."""
    _check_context(context)
    xi = np.asarray(xi, dtype=float)
    if modulation is None:
        modulation = default_modulation(params, ell, context)
    elif modulation == "power_2m":
        modulation = 1 << params.m
    if ell in (1, 2):
        s = params.dilation(ell, j)
        prof = WIDE if (ell == 2 and context not in TYPE2_CONTEXTS) else UPPER
        u = xi / s
        out = prof(u).astype(complex)
        if modulation:
            nz = out != 0
            out[nz] *= np.exp(2j * np.pi * modulation * u[nz])
        return out
    c, d = params.dilation(1, j), params.dilation(2, j)
    case = _third_case(params, j, context)
    if case == "small_second":
        return THIRD_NEG(xi / c).astype(complex)
    if case == "large_second":
        return THIRD_SYM(xi / d).astype(complex)
    if case == "first_dominant":
        return THIRD_RADIAL(np.abs(xi) / c).astype(complex)
    if case == "second_dominant":
        return THIRD_RADIAL(np.abs(xi) / d).astype(complex)
    return THIRD_SYM(xi / max(c, d)).astype(complex)


@dataclass(frozen=True, eq=False)
class MultiplierSymbol:
    window: Window
    values: np.ndarray  # FFT order on the grid
    modulation: int = 0


def check_fits(window: Window, grid: Grid):
    if window.extent >= grid.nyquist:
        raise NyquistOverflow(
            f"window {window.kind} [{window.lo:g}, {window.hi:g}] (ell={window.ell}, j={window.j}) "
            f"exceeds the Nyquist band of K={grid.log_size}"
        )


@lru_cache(maxsize=8192)
def _symbol_array(params, ell, j, modulation, grid, context):
    vals = symbol_values(params, ell, j, grid.xi, modulation, context)
    vals.flags.writeable = False
    return vals


def symbol_array(params: ParamSet, ell: int, j: int, grid: Grid, modulation=None, context: str = "pi_type1",
                 check: bool = True) -> np.ndarray:
    """Symbol sampled on the grid (read-only, cached)."""
    if modulation is None:
        modulation = default_modulation(params, ell, context)
    elif modulation == "power_2m":
        modulation = 1 << params.m
    if check:
        check_fits(window_of(params, ell, j, context), grid)
    return _symbol_array(params, ell, j, int(modulation), grid, context)


def symbol_of(params: ParamSet, ell: int, j: int, modulation, grid: Grid, context: str = "pi_type1") -> MultiplierSymbol:
    if modulation is None:
        modulation = default_modulation(params, ell, context)
    elif modulation == "power_2m":
        modulation = 1 << params.m
    w = window_of(params, ell, j, context)
    return MultiplierSymbol(w, symbol_array(params, ell, j, grid, modulation, context), int(modulation))


def k_index(measure: float) -> int:
    """round(log2(measure)), ties toward +infinity."""
    return math.floor(math.log2(measure) + 0.5)


def scale_indices(params: ParamSet, j: int, context: str = "lambda_sec4") -> tuple[int, int, int, int]:
    ks = tuple(k_index(window_of(params, ell, j, context).measure) for ell in (1, 2, 3))
    return ks + (min(ks),)


def _j_ok(params, grid, context, j) -> bool:
    for ell in (1, 2, 3):
        if window_of(params, ell, j, context).extent >= grid.nyquist:
            return False
    kj = scale_indices(params, j, context)[3]
    scale = math.ldexp(1.0, -kj)
    return grid.spacing * (1 - 1e-12) <= scale <= grid.period * (1 + 1e-12)


def admissible_j_range(params: ParamSet, grid: Grid, context: str = "pi_type1") -> tuple[int, int]:
    """Longest contiguous run of j whose windows fit and whose scale is resolvable."""
    _check_context(context)
    span = 4 * (grid.log_size + abs(params.M1) + abs(params.M2) + 16)
    best = None
    run_start = None
    for j in range(-span, span + 2):
        ok = j <= span and _j_ok(params, grid, context, j)
        if ok and run_start is None:
            run_start = j
        elif not ok and run_start is not None:
            run = (run_start, j - 1)
            if best is None or run[1] - run[0] > best[1] - best[0]:
                best = run
            run_start = None
    if best is None:
        raise EmptyRange(f"no admissible j for {params} on K={grid.log_size} ({context})")
    return best


def j_values(params: ParamSet, grid: Grid, context: str = "pi_type1", j_range=None) -> list[int]:
    lo, hi = admissible_j_range(params, grid, context) if j_range is None else j_range
    return list(range(lo, hi + 1))


def condition_2large1(params: ParamSet, js) -> bool:
    """2^(L2 j + M2) >= 2^(L1 j + M1 + m) for every j given."""
    return all(params.exponent(2, j) >= params.exponent(1, j) + params.m for j in js)


def symbol_csv(sym: MultiplierSymbol, grid: Grid) -> str:
    order = np.argsort(grid.frequencies)
    lines = ["xi,re,im"]
    for i in order:
        v = sym.values[i]
        lines.append(f"{grid.xi[i]!r},{float(v.real)!r},{float(v.imag)!r}")
    return "\n".join(lines) + "\n"
