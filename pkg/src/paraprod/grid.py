"""Periodic dyadic grid, sampled signals and measurable sets.

Conventions: the torus [0, period) carries N = 2**log_size samples at
x_i = i * period / N.  The forward DFT is unscaled, the inverse is scaled
by 1/N, and the DFT index k corresponds to the physical frequency
k / period, so that sample-domain multiplication of the spectrum by
exp(2 pi i xi t) is the translation f(x) -> f(x + t).  Every norm carries
the sample spacing so that it approximates the continuum integral.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    log_size: int
    period: float = 1.0

    def __post_init__(self):
        if int(self.log_size) != self.log_size or self.log_size < 4:
            raise ValueError(f"log_size must be an integer >= 4, got {self.log_size}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def size(self) -> int:
        return 1 << self.log_size

    @property
    def spacing(self) -> float:
        return self.period / self.size

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.size) * self.spacing

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Integer DFT indices in FFT order, covering [-N/2, N/2)."""
        k = np.fft.fftfreq(self.size, d=1.0 / self.size).astype(np.int64)
        k.flags.writeable = False
        return k

    @cached_property
    def xi(self) -> np.ndarray:
        """Physical frequencies (cycles per unit length) in FFT order."""
        out = self.frequencies / self.period
        out.flags.writeable = False
        return out

    @property
    def nyquist(self) -> float:
        """Physical frequencies strictly inside (-nyquist, nyquist) are representable."""
        return self.size / (2.0 * self.period)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


class Signal:
    """Complex samples on a grid.  Immutable; the spectrum is computed once."""

    def __init__(self, grid: Grid, samples, spectrum=None):
        samples = np.asarray(samples)
        if samples.shape != (grid.size,):
            raise ValueError(f"expected {grid.size} samples, got shape {samples.shape}")
        self.grid = grid
        self.samples = _frozen(samples)
        if spectrum is not None:
            self.__dict__["spectrum"] = _frozen(spectrum)

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum) -> "Signal":
        spectrum = np.asarray(spectrum, dtype=complex)
        return cls(grid, np.fft.ifft(spectrum), spectrum=spectrum)

    @classmethod
    def zeros(cls, grid: Grid) -> "Signal":
        return cls(grid, np.zeros(grid.size, dtype=complex))

    @cached_property
    def spectrum(self) -> np.ndarray:
        return _frozen(np.fft.fft(self.samples))

    def __add__(self, other: "Signal") -> "Signal":
        _check_same_grid(self, other)
        return Signal(self.grid, self.samples + other.samples)

    def __sub__(self, other: "Signal") -> "Signal":
        _check_same_grid(self, other)
        return Signal(self.grid, self.samples - other.samples)

    def __mul__(self, other):
        if isinstance(other, Signal):
            _check_same_grid(self, other)
            return Signal(self.grid, self.samples * other.samples)
        return Signal(self.grid, self.samples * other)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Signal(K={self.grid.log_size}, period={self.grid.period})"

    def to_json(self) -> dict:
        return {
            "log_size": self.grid.log_size,
            "period": self.grid.period,
            "re": self.samples.real.tolist(),
            "im": self.samples.imag.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Signal":
        grid = Grid(int(obj["log_size"]), float(obj.get("period", 1.0)))
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
        return cls(grid, re + 1j * im)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "re", "im"])
        for x, v in zip(self.grid.x, self.samples):
            w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()


def _check_same_grid(*signals):
    g = signals[0].grid
    for s in signals[1:]:
        if s.grid != g:
            raise ValueError("signals live on different grids")


class MeasurableSet:
    """Union of grid cells [x_i, x_i + spacing) selected by a boolean mask."""

    __slots__ = ("grid", "mask")

    def __init__(self, grid: Grid, mask):
        mask = np.array(mask, dtype=bool, copy=True)
        if mask.shape != (grid.size,):
            raise ValueError(f"mask must have {grid.size} entries")
        mask.flags.writeable = False
        self.grid = grid
        self.mask = mask

    @classmethod
    def empty(cls, grid: Grid) -> "MeasurableSet":
        return cls(grid, np.zeros(grid.size, dtype=bool))

    @classmethod
    def full(cls, grid: Grid) -> "MeasurableSet":
        return cls(grid, np.ones(grid.size, dtype=bool))

    @property
    def measure(self) -> float:
        return int(self.mask.sum()) * self.grid.spacing

    def __or__(self, other):
        return MeasurableSet(self.grid, self.mask | other.mask)

    def __and__(self, other):
        return MeasurableSet(self.grid, self.mask & other.mask)

    def __sub__(self, other):
        return MeasurableSet(self.grid, self.mask & ~other.mask)

    def complement(self) -> "MeasurableSet":
        return MeasurableSet(self.grid, ~self.mask)

    def issubset(self, other) -> bool:
        return bool(np.all(~self.mask | other.mask))

    def indicator(self) -> Signal:
        return Signal(self.grid, self.mask.astype(complex))

    def runs(self) -> list[tuple[int, int]]:
        """Maximal runs of set cells as (start, stop) sample indices, stop exclusive.

        Runs are not merged across the wrap point; a full set is a single run.
        """
        m = self.mask.astype(np.int8)
        if m.all():
            return [(0, self.grid.size)]
        d = np.diff(np.concatenate(([0], m, [0])))
        starts = np.flatnonzero(d == 1)
        stops = np.flatnonzero(d == -1)
        return list(zip(starts.tolist(), stops.tolist()))

    def to_json(self) -> dict:
        bits = np.packbits(self.mask.astype(np.uint8))
        return {"log_size": self.grid.log_size, "period": self.grid.period, "mask_hex": bits.tobytes().hex()}

    @classmethod
    def from_json(cls, obj: dict) -> "MeasurableSet":
        grid = Grid(int(obj["log_size"]), float(obj.get("period", 1.0)))
        bits = np.frombuffer(bytes.fromhex(obj["mask_hex"]), dtype=np.uint8)
        return cls(grid, np.unpackbits(bits)[: grid.size].astype(bool))

    def __repr__(self):
        return f"MeasurableSet(K={self.grid.log_size}, measure={self.measure:g})"


def dft_forward(s: Signal) -> np.ndarray:
    """Unscaled DFT, indexed by ``s.grid.frequencies`` (FFT order)."""
    return s.spectrum


def dft_inverse(grid: Grid, spectrum) -> Signal:
    return Signal.from_spectrum(grid, spectrum)


def lp_norm(s, p: float, grid: Grid | None = None) -> float:
    """Discrete L^p (quasi-)norm including the spacing factor.

    Accepts a Signal or a raw sample array together with ``grid``.
    """
    if isinstance(s, Signal):
        grid, values = s.grid, s.samples
    else:
        if grid is None:
            raise TypeError("grid is required for raw arrays")
        values = np.asarray(s)
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    a = np.abs(values)
    if np.isinf(p):
        return float(a.max(initial=0.0))
    return float((np.sum(a**p) * grid.spacing) ** (1.0 / p))


def sample_X_of(F: MeasurableSet, seed: int = 0, mode: str = "indicator") -> Signal:
    """A function supported on F with sup norm at most one."""
    if mode == "indicator":
        return F.indicator()
    if mode == "random_phase":
        rng = np.random.default_rng(seed)
        phase = np.exp(2j * np.pi * rng.random(F.grid.size))
        return Signal(F.grid, np.where(F.mask, phase, 0.0))
    raise ValueError(f"unknown mode {mode!r}")


def random_set(grid: Grid, target_measure: float, seed: int = 0, shape: str = "interval") -> MeasurableSet:
    if not 0 <= target_measure <= grid.period:
        raise ValueError(f"target_measure must lie in [0, {grid.period}]")
    N = grid.size
    count = min(N, int(round(target_measure / grid.spacing)))
    rng = np.random.default_rng(seed)
    mask = np.zeros(N, dtype=bool)
    if count == 0:
        return MeasurableSet(grid, mask)
    if shape == "interval":
        start = int(rng.integers(N))
        mask[(start + np.arange(count)) % N] = True
    elif shape == "bernoulli":
        mask[rng.choice(N, size=count, replace=False)] = True
    elif shape == "dyadic_union":
        # place aligned blocks largest first; the free cells always remain a
        # union of aligned blocks of the current size
        for r in range(grid.log_size, -1, -1):
            if not (count >> r) & 1:
                continue
            width = 1 << r
            blocks = mask.reshape(-1, width)
            free = np.flatnonzero(~blocks.any(axis=1))
            b = int(rng.choice(free))
            mask[b * width:(b + 1) * width] = True
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return MeasurableSet(grid, mask)


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
