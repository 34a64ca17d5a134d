"""Tiles, trees, sizes and the organization algorithm.

A tile s = (j, n) has time interval I_s = [2^-k n, 2^-k (n+1)] with
k = k_j the smallest scale index at level j.  Levels are restricted to one
residue class gamma modulo Gamma and to the admissible j-range, and
positions to 0 <= n, (n+1) 2^-k <= period, so intervals never wrap.

``size*`` is evaluated over maximal trees: for each candidate top t the
maximal tree in P with top t.  For branches whose Delta* grows with the
tree (caseA, p2_variant, m_variant) this is the exact supremum; for caseB
it is a lower bound, used identically on both sides of every comparison.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .classic import (
    DEFAULT_MOLLIFIER,
    E_DEFAULT,
    Mollifier,
    convolve,
    interval_mask,
    maximal,
    maximal_p,
    omega_j_and_psi,
    rational_bump,
)
from .errors import BranchMismatch
from .grid import Grid, MeasurableSet, Signal, lp_norm
from .paraproduct import translate_by
from .windows import ParamSet, admissible_j_range, scale_indices, symbol_array, window_of

SEC4, SEC5 = "lambda_sec4", "lambda_sec5"


@dataclass(frozen=True, order=True)
class Tile:
    j: int
    n: int

    def to_json(self) -> dict:
        return {"j": self.j, "n": self.n}


@dataclass(frozen=True)
class TileGeometry:
    """Scale structure shared by every tile set built on it."""

    params: ParamSet
    grid: Grid
    context: str = SEC4
    Gamma: int = 16
    gamma: int = 0
    j_range: tuple | None = None
    mollifier: Mollifier = DEFAULT_MOLLIFIER
    exponent: float = E_DEFAULT

    def __post_init__(self):
        if self.context not in (SEC4, SEC5):
            raise ValueError("tile context must be lambda_sec4 or lambda_sec5")
        if self.Gamma < 1 or not 0 <= self.gamma < self.Gamma:
            raise ValueError("need Gamma >= 1 and 0 <= gamma < Gamma")

    @cached_property
    def levels(self) -> tuple:
        lo, hi = self.j_range or admissible_j_range(self.params, self.grid, self.context)
        return tuple(j for j in range(lo, hi + 1) if (j - self.gamma) % self.Gamma == 0)

    def k(self, j: int) -> int:
        return _k_of(self.params, j, self.context)

    def k_ell(self, j: int, ell: int) -> int:
        return scale_indices(self.params, j, self.context)[ell - 1]

    def positions(self, j: int) -> int:
        """Number of tiles at level j: n in [0, positions)."""
        return int(math.floor(math.ldexp(self.grid.period, self.k(j)) + 1e-9))

    def interval(self, s: Tile) -> tuple[float, float]:
        w = math.ldexp(1.0, -self.k(s.j))
        return (s.n * w, (s.n + 1) * w)

    def length(self, s: Tile) -> float:
        return math.ldexp(1.0, -self.k(s.j))

    def validate(self, s: Tile):
        if s.j not in self.levels:
            raise ValueError(f"level j={s.j} not available (gamma={self.gamma}, Gamma={self.Gamma})")
        if not 0 <= s.n < self.positions(s.j):
            raise ValueError(f"tile {s} would wrap around the period")

    def contains(self, outer: Tile, inner: Tile) -> bool:
        """I_inner is a subset of I_outer."""
        ko, ki = self.k(outer.j), self.k(inner.j)
        return ki >= ko and (inner.n >> (ki - ko)) == outer.n

    def ancestor(self, s: Tile, j: int) -> Tile:
        return Tile(j, s.n >> (self.k(s.j) - self.k(j)))

    def all_tiles(self, levels=None) -> list:
        return [Tile(j, n) for j in (levels or self.levels) for n in range(self.positions(j))]

    def mask(self, s: Tile) -> np.ndarray:
        return interval_mask(self.grid, self.k(s.j), s.n)


@lru_cache(maxsize=4096)
def _k_of(params, j, context):
    return scale_indices(params, j, context)[3]


class TileSet:
    """Immutable finite set of tiles on a geometry."""

    def __init__(self, geom: TileGeometry, tiles=(), check: bool = True):
        self.geom = geom
        self.tiles = frozenset(tiles)
        if check:
            for s in self.tiles:
                geom.validate(s)

    def __iter__(self):
        return iter(sorted(self.tiles))

    def __len__(self):
        return len(self.tiles)

    def __contains__(self, s):
        return s in self.tiles

    def __eq__(self, other):
        return isinstance(other, TileSet) and self.tiles == other.tiles and self.geom == other.geom

    def __hash__(self):
        return hash(self.tiles)

    def _new(self, tiles):
        return TileSet(self.geom, tiles, check=False)

    def __or__(self, other):
        return self._new(self.tiles | other.tiles)

    def __sub__(self, other):
        return self._new(self.tiles - other.tiles)

    def __and__(self, other):
        return self._new(self.tiles & other.tiles)

    def by_level(self) -> dict:
        out = {}
        for s in sorted(self.tiles):
            out.setdefault(s.j, []).append(s.n)
        return out

    @cached_property
    def convex(self) -> bool:
        return is_convex(self)

    def to_json(self) -> dict:
        return {"gamma": self.geom.gamma, "Gamma": self.geom.Gamma,
                "tiles": [s.to_json() for s in sorted(self.tiles)]}

    def __repr__(self):
        return f"TileSet({len(self.tiles)} tiles)"


def is_convex(S: TileSet) -> bool:
    """Every tile between two nested tiles of S (in the level structure) lies in S."""
    geom = S.geom
    levels = geom.levels
    pos = {j: i for i, j in enumerate(levels)}
    for s in S.tiles:
        upper = levels[:pos[s.j]]
        top = None
        for jj in upper:
            if geom.ancestor(s, jj) in S.tiles:
                top = jj
                break
        if top is None:
            continue
        for jj in upper[pos[top]:]:
            if geom.ancestor(s, jj) not in S.tiles:
                return False
    return True


def convex_violations_brute(S: TileSet) -> int:
    """Count tiles s outside S with I_s1 within I_s within I_s2 for some s1, s2 in S."""
    geom = S.geom
    bad = 0
    tiles = list(S.tiles)
    for s in geom.all_tiles():
        if s in S.tiles:
            continue
        below = any(geom.contains(s, a) for a in tiles)
        above = any(geom.contains(b, s) for b in tiles)
        bad += below and above
    return bad


def convex_hull(S: TileSet) -> TileSet:
    geom = S.geom
    levels = geom.levels
    pos = {j: i for i, j in enumerate(levels)}
    out = set(S.tiles)
    for s in S.tiles:
        upper = levels[:pos[s.j]]
        for jj in upper:
            if geom.ancestor(s, jj) in S.tiles:
                out.update(geom.ancestor(s, x) for x in upper[pos[jj]:])
                break
    return S._new(out)


def random_convex_tileset(geom: TileGeometry, rng, n_seeds: int = 8, levels=None) -> TileSet:
    """Convex hull of a few random tiles."""
    levels = list(levels or geom.levels)
    picks = []
    for _ in range(n_seeds):
        j = levels[int(rng.integers(len(levels)))]
        picks.append(Tile(j, int(rng.integers(geom.positions(j)))))
    return convex_hull(TileSet(geom, picks))


# partitions


def in_first_branch(geom: TileGeometry, j: int) -> bool:
    w1 = window_of(geom.params, 1, j, geom.context).measure
    w2 = window_of(geom.params, 2, j, geom.context).measure
    if geom.context == SEC4:
        return w2 <= w1 / 6
    return w2 <= w1 / 10 or w1 <= w2 / 10


def partition_S1_S2(S: TileSet) -> tuple:
    one = {s for s in S.tiles if in_first_branch(S.geom, s.j)}
    return S._new(one), S._new(S.tiles - one)


def restrict_to_omega(S: TileSet, omega: MeasurableSet) -> TileSet:
    """Tiles whose time interval is not contained in omega."""
    keep = set()
    for s in S.tiles:
        m = S.geom.mask(s)
        if np.any(m & ~omega.mask):
            keep.add(s)
    return S._new(keep)


# trees


@dataclass(frozen=True, eq=False)
class Tree:
    top: Tile
    members: TileSet

    @property
    def geom(self) -> TileGeometry:
        return self.members.geom

    @property
    def interval(self) -> tuple:
        return self.geom.interval(self.top)

    @property
    def length(self) -> float:
        return self.geom.length(self.top)

    def scl(self) -> list:
        return sorted({s.j for s in self.members.tiles})

    def to_json(self) -> dict:
        return {"top": self.top.to_json(), "members": [s.to_json() for s in sorted(self.members.tiles)]}


def maximal_tree(S: TileSet, top: Tile) -> Tree:
    geom = S.geom
    return Tree(top, S._new({s for s in S.tiles if geom.contains(top, s)}))


@dataclass
class Forest:
    trees: list = field(default_factory=list)

    @property
    def count_value(self) -> float:
        return float(sum(t.length for t in self.trees))

    def tiles(self, geom: TileGeometry | None = None) -> TileSet | None:
        if not self.trees:
            return None if geom is None else TileSet(geom)
        out = set()
        for t in self.trees:
            out |= t.members.tiles
        return self.trees[0].members._new(out)

    def tops_disjoint(self) -> bool:
        ivs = sorted(t.interval for t in self.trees)
        return all(a[1] <= b[0] + 1e-15 for a, b in zip(ivs, ivs[1:]))

    def to_json(self) -> dict:
        return {"count": self.count_value, "trees": [t.to_json() for t in self.trees]}


def _longest_first(tiles, geom):
    return sorted(tiles, key=lambda s: (geom.k(s.j), s.j, s.n))


def maximal_trees(S: TileSet) -> Forest:
    """Partition S into maximal trees, longest top first, ties by (j, n)."""
    geom = S.geom
    stock = set(S.tiles)
    trees = []
    for t in _longest_first(S.tiles, geom):
        if t not in stock:
            continue
        members = {s for s in stock if geom.contains(t, s)}
        stock -= members
        trees.append(Tree(t, S._new(members)))
    return Forest(trees)


def forest_json(S: TileSet, forest: Forest) -> dict:
    d = S.to_json()
    d["trees"] = [t.to_json() for t in forest.trees]
    d["count"] = forest.count_value
    return d


# shadows


def shadow(T: Tree, j: int) -> list:
    """Merged intervals [(lo, hi), ...] of the level-j tiles of T."""
    ns = sorted(s.n for s in T.members.tiles if s.j == j)
    if not ns:
        raise ValueError(f"j={j} not in scl(T)")
    w = T.geom.length(Tile(j, 0))
    runs = []
    start = prev = ns[0]
    for n in ns[1:]:
        if n != prev + 1:
            runs.append((start * w, (prev + 1) * w))
            start = n
        prev = n
    runs.append((start * w, (prev + 1) * w))
    return runs


def shadow_boundary_count(T: Tree, j: int) -> int:
    return 2 * len(shadow(T, j))


def shadow_mask(T: Tree, j: int) -> MeasurableSet:
    mask = np.zeros(T.geom.grid.size, dtype=bool)
    for s in T.members.tiles:
        if s.j == j:
            mask |= T.geom.mask(s)
    return MeasurableSet(T.geom.grid, mask)


def shadow_witnesses(T: Tree) -> list:
    """(j, z, (z - 2^-k, z - 2^-k / 2)) for every left endpoint z of every shadow."""
    out = []
    for j in T.scl():
        w = T.geom.length(Tile(j, 0))
        for lo, _ in shadow(T, j):
            out.append((j, lo, (lo - w, lo - w / 2)))
    return out


def witnesses_disjoint(T: Tree) -> bool:
    ivs = sorted(w[2] for w in shadow_witnesses(T))
    return all(a[1] <= b[0] + 1e-15 for a, b in zip(ivs, ivs[1:]))


def shadow_constant(T: Tree) -> float:
    """sum_j 2^-k_j Card(boundary of Sh_j(T)) / |I_T|."""
    total = sum(T.geom.length(Tile(j, 0)) * shadow_boundary_count(T, j) for j in T.scl())
    return total / T.length


# band projections and weights


class Bands:
    """Band projections of one signal on a geometry, cached by (ell, j, modulation)."""

    def __init__(self, f: Signal, geom: TileGeometry):
        self.f = f
        self.geom = geom
        self._cache = {}

    def symbol(self, ell, j, modulation):
        ctx = "pi_type1" if self.geom.context == SEC4 else "pi_type2"
        return symbol_array(self.geom.params, ell, j, self.geom.grid, modulation, ctx)

    def get(self, ell: int, j: int, modulation: int = 0, derivative: bool = False) -> np.ndarray:
        key = (ell, j, modulation, derivative)
        out = self._cache.get(key)
        if out is None:
            spec = self.f.spectrum * self.symbol(ell, j, modulation)
            if derivative:
                spec = spec * (2j * np.pi * self.geom.grid.xi)
            out = np.fft.ifft(spec)
            self._cache[key] = out
        return out

    def native_modulation(self, ell: int) -> int:
        return self.geom.params.n(ell) if self.geom.context == SEC4 else 0


@lru_cache(maxsize=8192)
def _double_star(grid, k, n, E):
    w = math.ldexp(1.0, -k)
    out = rational_bump(grid, k, [(n * w, (n + 1) * w)], E)
    out.flags.writeable = False
    return out


def double_star(geom: TileGeometry, s: Tile, exponent=None) -> np.ndarray:
    return _double_star(geom.grid, geom.k(s.j), s.n, float(exponent or geom.exponent))


def star(geom: TileGeometry, s: Tile) -> np.ndarray:
    return _star(geom.grid, geom.k(s.j), s.n, geom.mollifier)


@lru_cache(maxsize=8192)
def _star(grid, k, n, mollifier):
    out = convolve(interval_mask(grid, k, n).astype(float), mollifier.kernel(grid, k), grid).real
    out.flags.writeable = False
    return out


def level_star(geom: TileGeometry, j: int, ns) -> np.ndarray:
    """sum over n in ns of 1*_{j,n}, by linearity a single smoothing of the union."""
    k = geom.k(j)
    mask = np.zeros(geom.grid.size)
    for n in ns:
        mask += interval_mask(geom.grid, k, n)
    return convolve(mask, geom.mollifier.kernel(geom.grid, k), geom.grid).real


# truncation data for the m-variant


@dataclass(frozen=True, eq=False)
class TruncationData:
    """Omega together with m and epsilon; caches psi*_{j} translated back by Tr~."""

    omega: MeasurableSet
    m: int
    epsilon: float

    def weight(self, geom: TileGeometry, ell: int, j: int) -> np.ndarray:
        return _psi_star_shifted(self, geom, ell, j)


@lru_cache(maxsize=2048)
def _psi_star_shifted(td, geom, ell, j):
    from .paraproduct import shift_amount

    oj = omega_j_and_psi(td.omega, geom.params, j, td.epsilon, td.m, geom.mollifier, SEC5)
    ps = oj.psi_star(geom.exponent)
    t = shift_amount(geom.params, ell, j, "Tr_tilde", td.m)
    # psi* o Tr~^{-1}: x -> psi*(x - t)
    return translate_by(ps, -t, "exact").signal.samples.real


# semi-norms


@dataclass(frozen=True)
class SeminormParts:
    value: float
    derivative: float

    @property
    def total(self) -> float:
        return self.value + self.derivative


def _lp(a, p, grid):
    return lp_norm(a, p, grid)


def seminorm(f, tile: Tile, geom: TileGeometry, ell: int, weight: str = "one_double_star", p=None,
             bands: Bands | None = None, trunc: TruncationData | None = None) -> SeminormParts:
    """The two-term semi-norm at a tile.

    weight ``one_double_star``: 1**_{j,n} times the band at the native modulation
    (n_ell in the lambda_sec4 geometry, 0 in lambda_sec5).  ``psi_star_m``: the
    m-variant, weighted additionally by psi*_j composed with Tr~^{-1}.
    """
    bands = bands or Bands(f, geom)
    grid = geom.grid
    p = geom.params.p if p is None else p
    mod = bands.native_modulation(ell)
    w = double_star(geom, tile)
    if weight == "psi_star_m":
        if trunc is None:
            raise ValueError("psi_star_m needs truncation data")
        w = w * trunc.weight(geom, ell, tile.j)
    elif weight != "one_double_star":
        raise ValueError(f"unknown weight {weight!r}")
    size = geom.length(tile) ** (-1.0 / p)
    a = size * _lp(w * bands.get(ell, tile.j, mod), p, grid)
    scale = math.ldexp(1.0, -geom.k_ell(tile.j, ell))
    b = size * _lp(scale * w * bands.get(ell, tile.j, mod, derivative=True), p, grid)
    return SeminormParts(a, b)


def zeta(params: ParamSet, j: int, M: int, K: int) -> int:
    Lb = params.L_big
    if not 0 <= M <= 6 * Lb:
        raise ValueError(f"M={M} outside [0, {6 * Lb}]")
    if not -10 * Lb <= K <= 10 * Lb:
        raise ValueError(f"K={K} outside [{-10 * Lb}, {10 * Lb}]")
    return (params.L1 * j + params.M1 - params.M2 - 6) // params.L2 + (params.L1 // params.L2) * M + K


def zeta_levels(params: ParamSet, j: int) -> list:
    """Distinct values of zeta(j, M, K) over the full (M, K) box."""
    Lb = params.L_big
    base = (params.L1 * j + params.M1 - params.M2 - 6) // params.L2
    step = params.L1 // params.L2
    return sorted({base + step * M + K for M in range(6 * Lb + 1) for K in range(-10 * Lb, 10 * Lb + 1)})


@dataclass(frozen=True)
class ZetaSeminorm:
    base: SeminormParts
    sup_term: float
    skipped: int  # levels whose window exceeded the Nyquist band

    @property
    def total(self) -> float:
        return self.base.total + self.sup_term


def zeta_seminorm(f, tile: Tile, geom: TileGeometry, ell: int, p=None, bands: Bands | None = None,
                  derivative_scale: str = "level") -> ZetaSeminorm:
    """Semi-norm plus the sup over zeta levels.

    ``derivative_scale='level'`` weights D f_zeta by 2^-k at level zeta (the
    scale-consistent reading); ``'interval'`` uses |I_s| literally.
    """
    bands = bands or Bands(f, geom)
    p = geom.params.p if p is None else p
    base = seminorm(f, tile, geom, ell, p=p, bands=bands)
    if ell == 1:
        return ZetaSeminorm(base, 0.0, 0)
    if derivative_scale not in ("level", "interval"):
        raise ValueError(f"unknown derivative_scale {derivative_scale!r}")
    return _zeta_sup(bands, tile, geom, ell, p, base, derivative_scale)


def _zeta_sup(bands, tile, geom, ell, p, base, derivative_scale):
    grid = geom.grid
    w = double_star(geom, tile)
    Is = geom.length(tile)
    best, skipped = 0.0, 0
    for z in zeta_levels(geom.params, tile.j):
        win = window_of(geom.params, ell, z, "pi_type1")
        if win.extent >= grid.nyquist:
            skipped += 1
            continue
        if win.extent * grid.period < 1 and win.distance_to_origin > 0:
            continue  # no grid frequency inside the window
        a = _lp(w * bands.get(ell, z, 0), p, grid)
        dscale = Is if derivative_scale == "interval" else math.ldexp(1.0, -scale_indices(geom.params, z, SEC4)[ell - 1])
        b = _lp(dscale * w * bands.get(ell, z, 0, derivative=True), p, grid)
        best = max(best, Is ** (-1.0 / p) * (a + b))
    return ZetaSeminorm(base, best, skipped)


# Delta* and sizes

BRANCHES = ("caseA", "caseB", "p2_variant", "m_variant")


def tree_branch(T: Tree) -> str:
    """caseA / caseB from the S^(1)/S^(2) partition; mixed trees raise."""
    flags = {in_first_branch(T.geom, j) for j in T.scl()}
    if len(flags) != 1:
        raise BranchMismatch("tree mixes S^(1) and S^(2) levels")
    return "caseA" if flags.pop() else "caseB"


def _check_branch(T: Tree, branch: str):
    if branch in ("caseA", "caseB"):
        if T.geom.context != SEC4:
            raise BranchMismatch(f"{branch} needs the lambda_sec4 geometry")
        if T.members.tiles and tree_branch(T) != branch:
            raise BranchMismatch(f"tree lies in the other branch, not {branch}")
    elif branch in ("p2_variant", "m_variant"):
        if T.geom.context != SEC5:
            raise BranchMismatch(f"{branch} needs the lambda_sec5 geometry")
    else:
        raise ValueError(f"unknown branch {branch!r}")


def delta_star(f, T: Tree, geom: TileGeometry | None = None, ell: int = 1, branch: str = "caseA",
               bands: Bands | None = None, trunc: TruncationData | None = None) -> Signal:
    geom = geom or T.geom
    grid = geom.grid
    if not T.members.tiles:
        return Signal.zeros(grid)
    _check_branch(T, branch)
    bands = bands or Bands(f, geom)
    params = geom.params
    tiles = sorted(T.members.tiles)
    if branch == "caseA":
        if ell == 2:
            return Signal(grid, np.abs(double_star(geom, T.top) * bands.get(2, T.top.j, params.n2)))
        acc = sum(np.abs(double_star(geom, s) * bands.get(ell, s.j, params.n(ell))) ** 2 for s in tiles)
        return Signal(grid, np.sqrt(acc))
    if branch == "caseB":
        if ell == 1:
            acc = sum(np.abs(double_star(geom, s) * bands.get(1, s.j, params.n1)) ** 2 for s in tiles)
            return Signal(grid, np.sqrt(acc))
        scl = set(T.scl())
        lag = params.L_big

        def fT(j):
            return bands.get(ell, j, 0) if j in scl else 0.0

        first = sum(np.abs(double_star(geom, s) * (fT(s.j) - fT(s.j - lag))) ** 2 for s in tiles)
        second = sum(np.abs(double_star(geom, s) * (bands.get(ell, s.j, params.n(ell)) - bands.get(ell, s.j, 0))) ** 2
                     for s in tiles)
        return Signal(grid, np.sqrt(first) + np.sqrt(second))
    if branch == "p2_variant":
        acc = sum(np.abs(star(geom, s) * bands.get(ell, s.j, 0)) ** 2 for s in tiles)
        return Signal(grid, np.sqrt(acc))
    # m_variant
    if ell not in (1, 2):
        raise ValueError("m_variant is defined for ell in {1, 2}")
    if trunc is None:
        raise ValueError("m_variant needs truncation data")
    acc = sum(np.abs(star(geom, s) * trunc.weight(geom, ell, s.j) * bands.get(ell, s.j, 0)) ** 2 for s in tiles)
    return Signal(grid, np.sqrt(acc))


def caseB_first_difference(f, T: Tree, ell: int, bands: Bands | None = None, only_lagged: bool = True) -> np.ndarray:
    """sum over tiles of |1** (f_{j,T} - f_{j-L,T})|^2, optionally only at levels with j - L in scl(T)."""
    geom = T.geom
    bands = bands or Bands(f, geom)
    scl = set(T.scl())
    lag = geom.params.L_big
    acc = np.zeros(geom.grid.size)
    for s in T.members.tiles:
        if only_lagged and s.j - lag not in scl:
            continue
        prev = bands.get(ell, s.j - lag, 0) if s.j - lag in scl else 0.0
        acc += np.abs(double_star(geom, s) * (bands.get(ell, s.j, 0) - prev)) ** 2
    return acc


def size_of_tree(f, T: Tree, geom: TileGeometry | None = None, ell: int = 1, branch: str = "caseA",
                 bands: Bands | None = None, trunc: TruncationData | None = None) -> float:
    geom = geom or T.geom
    if not T.members.tiles:
        return 0.0
    bands = bands or Bands(f, geom)
    p = geom.params.p
    if branch == "p2_variant":
        _check_branch(T, branch)
        if ell == 3 and not in_first_branch(geom, T.top.j):
            return seminorm(f, T.top, geom, 3, p=2, bands=bands).total
        d = delta_star(f, T, geom, ell, branch, bands)
        return T.length ** -0.5 * lp_norm(d, 2) + seminorm(f, T.top, geom, ell, p=2, bands=bands).total
    d = delta_star(f, T, geom, ell, branch, bands, trunc)
    first = T.length ** (-1.0 / p) * lp_norm(d, p)
    if branch == "caseA":
        return first + seminorm(f, T.top, geom, ell, p=p, bands=bands).total
    if branch == "caseB":
        return first + zeta_seminorm(f, T.top, geom, ell, p=p, bands=bands).total
    return first + seminorm(f, T.top, geom, ell, "psi_star_m", p=p, bands=bands, trunc=trunc).total


def _auto_branch(geom, P: TileSet):
    if geom.context == SEC5:
        return "p2_variant"
    flags = {in_first_branch(geom, s.j) for s in P.tiles}
    if len(flags) > 1:
        raise BranchMismatch("tile set mixes S^(1) and S^(2); partition it first")
    return "caseA" if (not flags or flags.pop()) else "caseB"


@dataclass
class SizeEvaluator:
    """Memoised size of maximal trees for one (f, ell, branch)."""

    f: Signal
    geom: TileGeometry
    ell: int
    branch: str
    trunc: TruncationData | None = None

    def __post_init__(self):
        self.bands = Bands(self.f, self.geom)
        self._memo = {}

    def tree_size(self, T: Tree) -> float:
        key = (T.top, T.members.tiles)
        v = self._memo.get(key)
        if v is None:
            v = size_of_tree(self.f, T, self.geom, self.ell, self.branch, self.bands, self.trunc)
            self._memo[key] = v
        return v

    def top_sizes(self, P: TileSet) -> dict:
        return {t: self.tree_size(maximal_tree(P, t)) for t in P.tiles}

    def size_star(self, P: TileSet) -> float:
        return max(self.top_sizes(P).values(), default=0.0)


def size_star(f, P: TileSet, geom: TileGeometry | None = None, ell: int = 1, branch: str | None = None,
              trunc: TruncationData | None = None) -> float:
    geom = geom or P.geom
    branch = branch or _auto_branch(geom, P)
    return SizeEvaluator(f, geom, ell, branch, trunc).size_star(P)


# organization


@dataclass
class OrganizeResult:
    S1: Forest
    S2: TileSet
    size_star_S: float
    size_star_S2: float
    halving_ok: bool
    tops_disjoint: bool
    count: float
    iterations: int
    refinements: int

    def to_json(self) -> dict:
        return {
            "size_star_S": self.size_star_S,
            "size_star_S2": self.size_star_S2,
            "halving_ok": self.halving_ok,
            "tops_disjoint": self.tops_disjoint,
            "count": self.count,
            "iterations": self.iterations,
            "refinements": self.refinements,
            "S1": self.S1.to_json(),
            "S2": [s.to_json() for s in sorted(self.S2.tiles)],
        }


def _greedy(S: TileSet, tops):
    geom = S.geom
    stock = set(S.tiles)
    istock = set(tops)
    trees = []
    iters = 0
    while istock:
        iters += 1
        J = _longest_first(istock, geom)[0]
        members = {s for s in stock if geom.contains(J, s)}
        stock -= members
        trees.append(Tree(J, S._new(members)))
        istock = {t for t in istock if not geom.contains(J, t)}
    return Forest(trees), S._new(stock), iters


def organize(S: TileSet, f: Signal, ell: int = 1, branch: str | None = None,
             trunc: TruncationData | None = None, max_refinements: int | None = None) -> OrganizeResult:
    """Split S into a forest of maximal trees S1 and a remainder S2 with halved size*."""
    geom = S.geom
    branch = branch or _auto_branch(geom, S)
    ev = SizeEvaluator(f, geom, ell, branch, trunc)
    sizes = ev.top_sizes(S)
    s_star = max(sizes.values(), default=0.0)
    if s_star == 0.0:
        return OrganizeResult(Forest(), S, 0.0, 0.0, True, True, 0.0, 0, 0)
    tops = {t for t, v in sizes.items() if v > s_star / 2}
    refinements = 0
    limit = len(S) if max_refinements is None else max_refinements
    while True:
        forest, S2, iters = _greedy(S, tops)
        s2_sizes = ev.top_sizes(S2)
        s2_star = max(s2_sizes.values(), default=0.0)
        violators = {t for t, v in s2_sizes.items() if v > s_star / 2}
        if not violators or refinements >= limit:
            break
        tops |= violators
        refinements += 1
    return OrganizeResult(forest, S2, s_star, s2_star, s2_star <= s_star / 2, forest.tops_disjoint(),
                          forest.count_value, iters, refinements)


def organize_inclusion(result: OrganizeResult, f: Signal, p: float) -> tuple:
    """Check the union of top intervals lies in {M_p(M f) >= size*/2}; returns (ok, min ratio)."""
    if not result.S1.trees:
        return True, math.inf
    mpm = maximal_p(maximal(f), p).samples.real
    thr = result.size_star_S / 2
    geom = result.S1.trees[0].geom
    covered = np.zeros(geom.grid.size, dtype=bool)
    for t in result.S1.trees:
        covered |= geom.mask(t.top)
    low = float(mpm[covered].min())
    return low >= thr, low / thr


def lpest_constant(f: Signal, T: Tree, ell: int, branch: str, geom: TileGeometry | None = None) -> float:
    """size(T) / inf over I_T of M_p(M f)."""
    geom = geom or T.geom
    mpm = maximal_p(maximal(f), geom.params.p).samples.real
    low = float(mpm[geom.mask(T.top)].min())
    s = size_of_tree(f, T, geom, ell, branch)
    return s / low if low > 0 else math.inf


# the restricted trilinear form


@dataclass(frozen=True)
class LambdaResult:
    value: complex
    partition_defect: float  # max |sum over all n of 1*_{j,n} - 1| across levels used


def lambda_S(f1: Signal, f2: Signal, f3: Signal, S: TileSet, variant: str = "sec4",
             trunc: TruncationData | None = None) -> LambdaResult:
    geom = S.geom
    grid = geom.grid
    params = geom.params
    if not S.tiles:
        return LambdaResult(0j, 0.0)
    fs = (f1, f2, f3)
    levels = S.by_level()
    total = 0j
    defect = 0.0
    if variant == "sec4":
        bands = [Bands(f, geom) for f in fs]
        for j, ns in levels.items():
            wgt = level_star(geom, j, ns)
            prod = wgt * bands[0].get(1, j, params.n1) * bands[1].get(2, j, params.n2) * bands[2].get(3, j, 0)
            total += prod.sum() * grid.spacing
            defect = max(defect, _defect(geom, j))
        return LambdaResult(complex(total), defect)
    if variant != "sec5":
        raise ValueError(f"unknown variant {variant!r}")
    from .paraproduct import shift_amount

    bands = [Bands(f, geom) for f in fs]
    for j, ns in levels.items():
        wgt = level_star(geom, j, ns)
        prod = 1.0
        for ell in (1, 2, 3):
            g = Signal(grid, wgt * bands[ell - 1].get(ell, j, 0))
            if trunc is None:
                t = shift_amount(params, ell, j, "Tr", params.m)
                prod = prod * translate_by(g, t, "exact").signal.samples
            else:
                t = shift_amount(params, ell, j, "Tr_tilde", trunc.m)
                psi = omega_j_and_psi(trunc.omega, params, j, trunc.epsilon, trunc.m, geom.mollifier, SEC5).psi
                prod = prod * psi.samples.real * translate_by(g, t, "exact").signal.samples
        total += np.sum(prod) * grid.spacing
        defect = max(defect, _defect(geom, j))
    return LambdaResult(complex(total), defect)


def _defect(geom, j):
    full = level_star(geom, j, range(geom.positions(j)))
    return float(np.max(np.abs(full - 1.0)))


def lambda_S_brute(f1, f2, f3, S: TileSet) -> complex:
    """Per-tile accumulation of the lambda_sec4 form (reference)."""
    geom = S.geom
    params = geom.params
    b = [Bands(f, geom) for f in (f1, f2, f3)]
    total = 0j
    for s in sorted(S.tiles):
        prod = star(geom, s) * b[0].get(1, s.j, params.n1) * b[1].get(2, s.j, params.n2) * b[2].get(3, s.j, 0)
        total += prod.sum() * geom.grid.spacing
    return complex(total)


# export


def rectangles_csv(S: TileSet) -> str:
    geom = S.geom
    ctx = "pi_type1" if geom.context == SEC4 else "pi_type2"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "n", "ell", "t_lo", "t_hi", "xi_lo", "xi_hi", "kind"])
    for s in sorted(S.tiles):
        lo, hi = geom.interval(s)
        for ell in (1, 2, 3):
            win = window_of(geom.params, ell, s.j, ctx)
            w.writerow([s.j, s.n, ell, repr(lo), repr(hi), repr(win.lo), repr(win.hi), win.kind])
    return buf.getvalue()


def tileset_from_json(obj: dict, geom: TileGeometry) -> TileSet:
    return TileSet(geom, [Tile(int(t["j"]), int(t["n"])) for t in obj["tiles"]])


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)
