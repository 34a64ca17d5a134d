"""Telescoping decomposition of the type-1 pairing into admissible forms.

Each form is stored symbolically: for every scale index i and every input
ell, a list of (coefficient, base) terms, where a base is one of

``f1``  upper-profile symbol at scale i, modulated by n1
``f2``  wide-profile symbol at scale i, modulated by n2
``f2t`` the replacement profile (flat on [-3/4, 3/4]) at scale i, unmodulated
``f3``  third-input symbol flat on [-17 b, 17 b], b = 2^(L2 i + M2)
``f3s`` bump flat on -(omega_1 + omega_2), supported on its 1.25-dilation

The decomposition emits six forms, always in the same order; a form whose
scale set is empty contributes zero.  Evaluation caches base projections
and is batched over several input triples at once.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .errors import AdmissibilityViolation
from .grid import Grid, Signal
from .windows import (
    THIRD_SYM,
    UPPER,
    WIDE,
    BumpProfile,
    ParamSet,
    admissible_j_range,
    make_bump,
)

TILDE2 = make_bump("custom", -1, 1, -0.75, 0.75)
FORM_LABELS = ("small_omega2_case", "replacement_term", "Lambda11", "Lambda12", "Lambda2", "Lambda3")


def m_of_j(params: ParamSet, j: int) -> int:
    return ((params.L2 - params.L1) * j + params.M2 - params.M1 + 6) // params.L2


def m_prime_of_j(params: ParamSet, j: int) -> int:
    return ((params.L2 - params.L1) * j + params.M2 - params.M1 + 6) // params.L1


def is_small_branch(params: ParamSet, j: int) -> bool:
    """b2 < b1 / 16 with b1 = 2 * 2^(L1 j + M1), b2 = 2^(L2 j + M2)."""
    return params.exponent(2, j) < params.exponent(1, j) - 3


# base symbols


def _neighborhood(params, i) -> BumpProfile:
    c, d = params.dilation(1, i), params.dilation(2, i)
    lo, hi = -(2 * c + d), -(c / 2 - d)
    mid, w = (lo + hi) / 2, (hi - lo) / 2
    return BumpProfile(mid - 1.25 * w, mid + 1.25 * w, lo, hi)


def base_window(params: ParamSet, base) -> tuple[float, float]:
    kind, i = base
    c, d = params.dilation(1, i), params.dilation(2, i)
    if kind == "f1":
        return (c / 2, 2 * c)
    if kind in ("f2", "f2t"):
        return (-d, d)
    if kind == "f3":
        return (-18 * d, 18 * d)
    if kind == "f3s":
        return _neighborhood(params, i).support
    raise ValueError(kind)


def base_values(params: ParamSet, base, xi) -> np.ndarray:
    kind, i = base
    xi = np.asarray(xi, dtype=float)
    c, d = params.dilation(1, i), params.dilation(2, i)
    if kind == "f1":
        u = xi / c
        out = UPPER(u).astype(complex)
        if params.n1:
            out *= np.exp(2j * np.pi * params.n1 * u)
        return out
    if kind == "f2":
        u = xi / d
        out = WIDE(u).astype(complex)
        if params.n2:
            out *= np.exp(2j * np.pi * params.n2 * u)
        return out
    if kind == "f2t":
        return TILDE2(xi / d).astype(complex)
    if kind == "f3":
        return THIRD_SYM(xi / d).astype(complex)
    if kind == "f3s":
        return _neighborhood(params, i)(xi).astype(complex)
    raise ValueError(kind)


# forms


@dataclass
class AdmissibleForm:
    label: str
    js: list
    terms: dict  # i -> ([terms ell=1], [terms ell=2], [terms ell=3]); term = (coef, (kind, scale))
    good_indices: tuple
    block_ranges: dict = field(default_factory=dict)  # i -> (kmin, kmax, m'(i)) for block inputs
    block_inputs: tuple = ()  # inputs carrying sums over several first-input scales

    @property
    def bad_indices(self) -> tuple:
        return tuple(l for l in (1, 2, 3) if l not in self.good_indices)

    def symbol_values(self, params: ParamSet, ell: int, i: int, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape, dtype=complex)
        for coef, base in self.terms[i][ell - 1]:
            out += coef * base_values(params, base, xi)
        return out

    def window(self, params: ParamSet, ell: int, i: int) -> tuple[float, float]:
        """Hull of the supports of the terms (an interval)."""
        ws = [base_window(params, b) for _, b in self.terms[i][ell - 1]]
        return (min(w[0] for w in ws), max(w[1] for w in ws))

    def is_block(self, ell: int) -> bool:
        return ell in self.block_inputs

    def to_json(self, params: ParamSet | None = None) -> dict:
        d = {
            "label": self.label,
            "good_indices": list(self.good_indices),
            "js": list(self.js),
            "terms": {str(i): [[[c, b[0], b[1]] for c, b in t] for t in self.terms[i]] for i in self.js},
            "block_ranges": {str(i): list(v) for i, v in self.block_ranges.items()},
            "block_inputs": list(self.block_inputs),
        }
        if params is not None:
            d["windows"] = {str(i): [list(self.window(params, l, i)) for l in (1, 2, 3)] for i in self.js}
        return d


@dataclass
class Decomposition:
    params: ParamSet
    grid: Grid
    j_range: tuple
    forms: list
    small_js: list
    large_js: list
    dropped: list  # (j, m(j)) telescoping terms removed by support disjointness
    residual_bound: float = float("nan")

    @property
    def nonempty_forms(self) -> list:
        return [f for f in self.forms if f.js]

    @property
    def mixed_branch(self) -> bool:
        return bool(self.small_js) and bool(self.large_js)

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "log_size": self.grid.log_size,
            "period": self.grid.period,
            "j_range": list(self.j_range),
            "small_js": list(self.small_js),
            "large_js": list(self.large_js),
            "mixed_branch": self.mixed_branch,
            "dropped": [list(x) for x in self.dropped],
            "residual_bound": self.residual_bound,
            "forms": [f.to_json(self.params) for f in self.forms],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def _one(kind, i):
    return [(1.0, (kind, i))]


def _diff(kind, a, b):
    return [(1.0, (kind, a)), (-1.0, (kind, b))]


def _block(i, ks):
    return [(1.0, ("f1", i + k)) for k in ks]


def telescope_decompose(params: ParamSet, grid: Grid, j_range=None) -> Decomposition:
    lo, hi = admissible_j_range(params, grid, "lambda_sec4") if j_range is None else j_range
    J = list(range(lo, hi + 1))
    small = [j for j in J if is_small_branch(params, j)]
    large = [j for j in J if not is_small_branch(params, j)]
    large_set = set(large)
    forms = []

    # scales where the second window is tiny: the third window is a neighbourhood of -(w1 + w2)
    forms.append(AdmissibleForm("small_omega2_case", small,
                                {j: (_one("f1", j), _one("f2", j), _one("f3s", j)) for j in small}, (1, 3)))

    # swap the modulated second symbol for the replacement profile
    forms.append(AdmissibleForm("replacement_term", large,
                                {j: (_one("f1", j), _diff_mixed(j), _one("f3", j)) for j in large}, (1, 2)))

    # telescoped, re-indexed sum: sum_i B_i (g_i - g_{i-1}), g_i = f2t_i f3_i
    dropped = [(j, m_of_j(params, j)) for j in large]
    blocks = {}
    if large:
        i_lo = min(j - m_of_j(params, j) for j in large)
        for i in range(i_lo, max(large) + 1):
            mp = m_prime_of_j(params, i)
            ks = [k for k in range(0, mp + 1) if i + k in large_set]
            if ks:
                blocks[i] = (ks, mp)
    I = sorted(blocks)
    r = params.L2 // params.L1

    def trunc(i, cut):
        ks, mp = blocks[i]
        return [k for k in ks if k >= mp - cut - r]

    def form(label, good, pick, f2, f3, cut=None):
        terms, ranges = {}, {}
        for i in I:
            ks = blocks[i][0] if cut is None else trunc(i, cut)
            if not ks:
                continue
            terms[i] = (_block(i, ks), f2(i), f3(i))
            ranges[i] = (min(ks), max(ks), blocks[i][1])
        return AdmissibleForm(label, sorted(terms), terms, good, ranges, (1,))

    forms.append(form("Lambda11", (2, 3), None, lambda i: _diff("f2t", i, i - 1), lambda i: _diff("f3", i, i - 1)))
    forms.append(form("Lambda12", (1, 3), None, lambda i: _one("f2t", i - 1), lambda i: _diff("f3", i, i - 1), 10))
    forms.append(form("Lambda2", (2, 3), None, lambda i: _diff("f2t", i, i - 1), lambda i: _diff("f3", i - 1, i - 8)))
    forms.append(form("Lambda3", (1, 2), None, lambda i: _diff("f2t", i, i - 1), lambda i: _one("f3", i - 8), 100))
    return Decomposition(params, grid, (lo, hi), forms, small, large, dropped)


def _diff_mixed(j):
    return [(1.0, ("f2", j)), (-1.0, ("f2t", j))]


# evaluation


class BaseCache:
    """Band projections of a batch of inputs, keyed by base."""

    def __init__(self, params: ParamSet, grid: Grid, spectra: np.ndarray):
        self.params = params
        self.grid = grid
        self.spectra = spectra  # (B, N)
        self._cache = {}
        self._combos = {}
        self._prefix = {}

    def get(self, base) -> np.ndarray:
        out = self._cache.get(base)
        if out is None:
            sym = base_values(self.params, base, self.grid.xi)
            out = sfft.ifft(self.spectra * sym[None, :], axis=-1, workers=-1)
            self._cache[base] = out
        return out

    def _prefix_sum(self, j):
        """Sum of the f1 projections over scales lo..j, lo fixed by the first request."""
        if j in self._prefix:
            return self._prefix[j]
        prev = self._prefix.get(j - 1)
        if prev is None:
            if not self._prefix:
                self._prefix[j - 1] = 0
                prev = 0
            else:
                lo = min(self._prefix)
                if j < lo:
                    raise KeyError(j)
                prev = self._prefix_sum(j - 1)
        out = prev + self.get(("f1", j))
        self._prefix[j] = out
        return out

    def _block(self, scales):
        lo, hi = scales[0], scales[-1]
        if self._prefix and lo - 1 < min(self._prefix):
            self._prefix.clear()
        if not self._prefix:
            self._prefix[lo - 1] = 0
        return self._prefix_sum(hi) - self._prefix_sum(lo - 1)

    def combo(self, terms) -> np.ndarray:
        key = tuple(terms)
        out = self._combos.get(key)
        if out is not None:
            return out
        scales = [b[1] for _, b in terms]
        if (len(terms) > 2 and all(c == 1.0 and b[0] == "f1" for c, b in terms)
                and scales == list(range(scales[0], scales[-1] + 1))):
            out = self._block(scales)
        else:
            out = None
            for coef, base in terms:
                v = self.get(base)
                out = coef * v if out is None else out + coef * v
        self._combos[key] = out
        return out


def _batch(fs) -> np.ndarray:
    if isinstance(fs, Signal):
        return fs.spectrum[None, :]
    return np.stack([f.spectrum for f in fs])


def evaluate_form(form: AdmissibleForm, caches) -> np.ndarray:
    """Value of the form for each triple in the batch; shape (B,)."""
    c1, c2, c3 = caches
    total = np.zeros(c1.spectra.shape[0], dtype=complex)
    for i in form.js:
        t1, t2, t3 = form.terms[i]
        total += np.einsum("bn,bn->b", c1.combo(t1) * c2.combo(t2), c3.combo(t3))
    return total * c1.grid.spacing


def make_caches(params, grid, f1s, f2s, f3s):
    return tuple(BaseCache(params, grid, _batch(f)) for f in (f1s, f2s, f3s))


def evaluate_decomposition(dec: Decomposition, f1s, f2s, f3s, caches=None) -> dict:
    """Per-form values (label -> (B,) array) for a batch of triples."""
    caches = caches or make_caches(dec.params, dec.grid, f1s, f2s, f3s)
    return {f.label: evaluate_form(f, caches) for f in dec.forms}


def original_pairing(dec: Decomposition, f1s, f2s, f3s, caches=None) -> np.ndarray:
    """Integral of Pi_type1(f1, f2) f3 over the decomposition's j-range, batched."""
    caches = caches or make_caches(dec.params, dec.grid, f1s, f2s, f3s)
    lo, hi = dec.j_range
    g = 0
    for j in range(lo, hi + 1):
        g = g + caches[0].get(("f1", j)) * caches[1].get(("f2", j))
    f3 = np.fft.ifft(caches[2].spectra, axis=-1)
    return np.sum(g * f3, axis=-1) * dec.grid.spacing


@dataclass(frozen=True)
class IdentityCheck:
    lhs: np.ndarray
    rhs: np.ndarray
    abs_error: np.ndarray
    tolerance: np.ndarray
    ok: bool


def check_identity(dec: Decomposition, f1s, f2s, f3s, rtol: float = 1e-8) -> IdentityCheck:
    caches = make_caches(dec.params, dec.grid, f1s, f2s, f3s)
    lhs = original_pairing(dec, f1s, f2s, f3s, caches)
    parts = evaluate_decomposition(dec, f1s, f2s, f3s, caches)
    rhs = sum(parts.values())
    err = np.abs(lhs - rhs)
    tol = rtol * np.maximum(1.0, np.abs(lhs))
    dec.residual_bound = float(np.max(err / np.maximum(1.0, np.abs(lhs))))
    return IdentityCheck(lhs, rhs, err, tol, bool(np.all(err <= tol)))


# support certificates


def support_indices(params: ParamSet, grid: Grid, terms) -> np.ndarray:
    """Integer DFT indices (in [-N/2, N/2)) where the combined symbol is nonzero."""
    vals = np.zeros(grid.size, dtype=complex)
    for coef, base in terms:
        vals += coef * base_values(params, base, grid.xi)
    return grid.frequencies[vals != 0]


def disjointness_certificate(params: ParamSet, grid: Grid, terms1, terms2, terms3) -> bool:
    """True if no k1 + k2 + k3 = 0 (mod N) with every k_ell in the symbol supports.

    Interval arithmetic on the extreme indices: the sum range must avoid
    every multiple of N.
    """
    sets = [support_indices(params, grid, t) for t in (terms1, terms2, terms3)]
    if any(s.size == 0 for s in sets):
        return True
    lo = sum(int(s.min()) for s in sets)
    hi = sum(int(s.max()) for s in sets)
    N = grid.size
    # is there a multiple of N in [lo, hi]?
    first = -(-lo // N) * N
    return first > hi


def dropped_term_certificates(dec: Decomposition) -> list:
    """(j, certified) for every telescoping term dropped by support disjointness."""
    out = []
    for j, mj in dec.dropped:
        i = j - mj - 1
        ok = disjointness_certificate(dec.params, dec.grid, _one("f1", j), _one("f2t", i), _one("f3", i))
        out.append((j, ok))
    return out


def dropped_term_value(dec: Decomposition, j: int, f1s, f2s, f3s) -> np.ndarray:
    i = j - m_of_j(dec.params, j) - 1
    caches = make_caches(dec.params, dec.grid, f1s, f2s, f3s)
    prod = caches[0].get(("f1", j)) * caches[1].get(("f2t", i)) * caches[2].get(("f3", i))
    return np.sum(prod, axis=-1) * dec.grid.spacing


def truncation_certificates(dec: Decomposition) -> list:
    """Certify that the block terms removed from Lambda12 and Lambda3 pair to zero.

    Returns (label, i, certified) for each scale where terms were removed.
    """
    full = {f.label: f for f in dec.forms}
    out = []
    for label, ref in (("Lambda12", "Lambda11"), ("Lambda3", "Lambda2")):
        form = full[label]
        for i, (kmin, kmax, mp) in form.block_ranges.items():
            ks_all = [k for k in range(0, mp + 1) if ("f1", i + k) in
                      {b for _, b in _all_block_terms(dec, i)}]
            removed = [k for k in ks_all if k < kmin]
            if not removed:
                continue
            t2, t3 = form.terms[i][1], form.terms[i][2]
            ok = disjointness_certificate(dec.params, dec.grid, _block(i, removed), t2, t3)
            out.append((label, i, ok))
    return out


def _all_block_terms(dec, i):
    for f in dec.forms:
        if f.label == "Lambda11" and i in f.terms:
            return f.terms[i][0]
    return []


def removed_block_support(dec: Decomposition, label: str, i: int) -> np.ndarray:
    """Physical frequencies where the removed part of the block is nonzero."""
    form = next(f for f in dec.forms if f.label == label)
    kmin = form.block_ranges[i][0]
    removed = [(c, b) for c, b in _all_block_terms(dec, i) if b[1] - i < kmin]
    if not removed:
        return np.array([])
    return support_indices(dec.params, dec.grid, removed) / dec.grid.period


# admissibility


@dataclass
class AdmissibilityReport:
    label: str
    ok: bool
    failures: list
    vanish: dict  # ell -> max |symbol(0)|
    lacunarity: dict  # ell -> max ratio, for single-scale families
    geometry: dict  # ell -> max dist/length
    c1: float  # min over j of |w3| / max(|w1|, |w2|)
    c3: float | None  # clause (3) constant when a bad index is 2 or 3
    deriv_constants: dict  # ell -> {(N, alpha): C}


def _deriv_constants(form, params, ell, i, nmod, h=1e-3, R=40.0):
    lo, hi = form.window(params, ell, i)
    width = hi - lo
    xi = np.arange(-R, R + h / 2, h)
    g = form.symbol_values(params, ell, i, xi * width)
    derivs = {0: g, 1: np.gradient(g, h), 2: np.gradient(np.gradient(g, h), h)}
    out = {}
    for N in range(5):
        wgt = (1 + np.abs(xi)) ** N
        for a in range(3):
            out[(N, a)] = float(np.max(np.abs(derivs[a]) * wgt) / (1 + abs(nmod)) ** a)
    return out


def check_admissible(form: AdmissibleForm, params: ParamSet, tol: float = 1e-12, raise_on_fail: bool = True,
                     derivatives: bool = False) -> AdmissibilityReport:
    failures = []
    vanish, lac, geom, derivs = {}, {}, {}, {}
    c1 = math.inf
    c3 = None
    if len(form.good_indices) < 2:
        failures.append("(2) fewer than two good indices")
    js = list(form.js)
    for ell in (1, 2, 3):
        geom[ell] = 0.0
        for i in js:
            lo, hi = form.window(params, ell, i)
            length = hi - lo
            dist = 0.0 if lo <= 0 <= hi else min(abs(lo), abs(hi))
            geom[ell] = max(geom[ell], dist / length)
        if geom[ell] > 3:
            failures.append(f"(1) distance to origin exceeds 3|w| for ell={ell}")
        if ell in form.good_indices:
            v0 = max((abs(form.symbol_values(params, ell, i, np.zeros(1))[0]) for i in js), default=0.0)
            vanish[ell] = v0
            if v0 > tol:
                failures.append(f"(vanish) |symbol(0)| = {v0:.3g} for good index {ell}")
        if not form.is_block(ell) and len(js) > 1:
            lengths = [form.window(params, ell, i)[1] - form.window(params, ell, i)[0] for i in js]
            ratio = max(a / b for a, b in zip(lengths, lengths[1:]))
            lac[ell] = ratio
            if ratio > 0.5 + 1e-12:
                failures.append(f"(1) lacunarity ratio {ratio:.3g} > 1/2 for ell={ell}")
        if derivatives and js:
            nmod = params.n(ell)
            derivs[ell] = _deriv_constants(form, params, ell, js[len(js) // 2], nmod)
    for i in js:
        w = [form.window(params, l, i) for l in (1, 2, 3)]
        lens = [b - a for a, b in w]
        c1 = min(c1, lens[2] / max(lens[0], lens[1]))
    bad = form.bad_indices
    if any(b in (2, 3) for b in bad) and js:
        consts = []
        for lp in form.good_indices:
            worst = 0.0
            for i in js:
                lens = [form.window(params, l, i)[1] - form.window(params, l, i)[0] for l in (1, 2, 3)]
                worst = max(worst, lens[lp - 1] / min(lens))
            consts.append(worst)
        c3 = min(consts)
    if 1 in bad:
        for i in js:
            t1 = form.terms[i][0]
            if not all(b[0] == "f1" and c == 1.0 for c, b in t1):
                failures.append(f"(4) block at i={i} is not a sum of unit first-input symbols")
                break
            ks = sorted(b[1] - i for _, b in t1)
            mp = m_prime_of_j(params, i)
            if ks[0] < 0 or ks[-1] > mp or ks != list(range(ks[0], ks[-1] + 1)):
                failures.append(f"(4) block at i={i} has offsets {ks[0]}..{ks[-1]} outside [0, {mp}]")
                break
    rep = AdmissibilityReport(form.label, not failures, failures, vanish, lac, geom,
                              c1 if js else math.nan, c3, derivs)
    if failures and raise_on_fail:
        raise AdmissibilityViolation(form.label, failures)
    return rep
