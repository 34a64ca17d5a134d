"""Monte Carlo norm-ratio estimates over parameter grids.

Trial t of every axis point draws its inputs from the t-th child of
``SeedSequence(seed)``, so axis points share inputs (common random numbers)
and a longer run extends a shorter one.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AllTrialsDegenerate
from .grid import Grid, Signal, lp_norm, random_set, sample_X_of
from .paraproduct import paraproduct_type1, paraproduct_type2
from .windows import THIRD_NEG, THIRD_SYM, UPPER, WIDE, ParamSet, condition_2large1, j_values

AXES = ("M1", "M2", "n1", "n2", "m", "L1", "L2")
N_EXPONENT = 10
SET_SHAPES = ("interval", "bernoulli", "dyadic_union")


def profile_fingerprint() -> str:
    parts = [f"{name}[{b.a:g},{b.b:g};{b.c:g},{b.d:g}]"
             for name, b in (("upper", UPPER), ("wide", WIDE), ("third_neg", THIRD_NEG), ("third_sym", THIRD_SYM))]
    return "smoothstep-exp " + " ".join(parts)


def check_exponents(exponents, tol: float = 1e-12):
    p1, p2, r = exponents
    if not (p1 > 0 and p2 > 0 and r > 0):
        raise ValueError("exponents must be positive")
    if abs(1 / p1 + 1 / p2 - 1 / r) > tol:
        raise ValueError(f"need 1/p1 + 1/p2 = 1/r, got {exponents}")


def draw_inputs(grid: Grid, rng: np.random.Generator, input_model="X_of_random_sets"):
    if callable(input_model):
        return input_model(grid, rng)
    if input_model == "X_of_random_sets":
        out = []
        for _ in range(2):
            meas = float(rng.uniform(0.05, 0.5)) * grid.period
            shape = SET_SHAPES[int(rng.integers(len(SET_SHAPES)))]
            F = random_set(grid, meas, int(rng.integers(2**31)), shape)
            out.append(sample_X_of(F, int(rng.integers(2**31)), "random_phase"))
        return tuple(out)
    if input_model == "random_bandlimited":
        band = grid.size // 8
        out = []
        for _ in range(2):
            spec = np.zeros(grid.size, dtype=complex)
            k = np.arange(-band, band + 1)
            spec[k % grid.size] = rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size)
            out.append(Signal.from_spectrum(grid, spec))
        return tuple(out)
    raise ValueError(f"unknown input model {input_model!r}")


def _apply(operator, f1, f2, params):
    if operator == "type1":
        return paraproduct_type1(f1, f2, params)
    if operator == "type2":
        return paraproduct_type2(f1, f2, params)
    raise ValueError(f"unknown operator {operator!r}")


@dataclass(frozen=True)
class RatioEstimate:
    max_ratio: float
    median_ratio: float
    count: int
    ratios: tuple


def trial_ratios(params: ParamSet, exponents, trials: int, seed: int, operator: str = "type1",
                 input_model="X_of_random_sets", grid: Grid | None = None) -> list:
    """Ratio per trial, or None where the denominator vanished."""
    check_exponents(exponents)
    if trials < 1:
        raise ValueError("trials must be positive")
    grid = grid or Grid(12)
    p1, p2, r = exponents
    out = []
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(child)
        f1, f2 = draw_inputs(grid, rng, input_model)
        den = lp_norm(f1, p1) * lp_norm(f2, p2)
        if den == 0:
            out.append(None)
            continue
        out.append(lp_norm(_apply(operator, f1, f2, params), r) / den)
    return out


def ratio_estimate(params: ParamSet, exponents, trials: int, seed: int, operator: str = "type1",
                   input_model="X_of_random_sets", grid: Grid | None = None) -> RatioEstimate:
    vals = [v for v in trial_ratios(params, exponents, trials, seed, operator, input_model, grid) if v is not None]
    if not vals:
        raise AllTrialsDegenerate("every trial had a zero input")
    return RatioEstimate(max(vals), float(np.median(vals)), len(vals), tuple(vals))


@dataclass
class ExperimentPlan:
    base: ParamSet = field(default_factory=ParamSet)
    axes: dict = field(default_factory=dict)
    exponents: tuple = (4.0, 4.0, 2.0)
    trials: int = 40
    seed: int = 0
    operator: str = "type1"
    input_model: str = "X_of_random_sets"
    log_size: int = 12
    period: float = 1.0

    def __post_init__(self):
        check_exponents(self.exponents)
        unknown = set(self.axes) - set(AXES)
        if unknown:
            raise ValueError(f"unknown axes {sorted(unknown)}; allowed {AXES}")
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValueError("axes must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be positive")

    @property
    def grid(self) -> Grid:
        return Grid(self.log_size, self.period)

    def points(self) -> list:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.axes[n] for n in names))]

    def to_json(self) -> dict:
        d = asdict(self)
        d["base"] = self.base.to_json()
        d["axes"] = {k: list(v) for k, v in self.axes.items()}
        d["exponents"] = list(self.exponents)
        return d


def _normalizer(plan: ExperimentPlan, params: ParamSet) -> float:
    out = 1.0
    if "n1" in plan.axes or "n2" in plan.axes:
        out *= (1 + abs(params.n1)) ** N_EXPONENT * (1 + abs(params.n2)) ** N_EXPONENT
    if "m" in plan.axes:
        out *= 2.0 ** (params.epsilon * params.m)
    return out


def _row(plan: ExperimentPlan, point: dict) -> dict:
    params = plan.base.replace(**point)
    grid = plan.grid
    ctx = "pi_type1" if plan.operator == "type1" else "pi_type2"
    js = j_values(params, grid, ctx)
    est = ratio_estimate(params, plan.exponents, plan.trials, plan.seed, plan.operator, plan.input_model, grid)
    norm = _normalizer(plan, params)
    return {
        "point": point,
        "max_ratio": est.max_ratio,
        "median_ratio": est.median_ratio,
        "normalized_max": est.max_ratio / norm,
        "normalized_median": est.median_ratio / norm,
        "trials": est.count,
        "condition_2large1": condition_2large1(params, js),
        "profile": profile_fingerprint(),
        "log_size": grid.log_size,
        "j_range": [js[0], js[-1]],
    }


@dataclass
class SweepReport:
    plan: ExperimentPlan
    rows: list

    def to_json(self) -> dict:
        return {"plan": self.plan.to_json(), "rows": self.rows}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    def to_csv(self) -> str:
        names = list(self.plan.axes)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names + ["max_ratio", "median_ratio", "normalized_max", "normalized_median", "trials",
                            "condition_2large1", "log_size", "j_min", "j_max", "profile"])
        for r in self.rows:
            w.writerow([r["point"][n] for n in names]
                       + [repr(r["max_ratio"]), repr(r["median_ratio"]), repr(r["normalized_max"]),
                          repr(r["normalized_median"]), r["trials"], int(r["condition_2large1"]), r["log_size"],
                          r["j_range"][0], r["j_range"][1], r["profile"]])
        return buf.getvalue()

    def plot_data(self) -> str:
        """Axis columns followed by max and normalized max ratios."""
        names = list(self.plan.axes)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names + ["ratio", "normalized_ratio"])
        for r in self.rows:
            w.writerow([r["point"][n] for n in names] + [repr(r["max_ratio"]), repr(r["normalized_max"])])
        return buf.getvalue()

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows])


def uniformity_sweep(plan: ExperimentPlan, jobs: int = 1) -> SweepReport:
    points = plan.points()
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_row, [plan] * len(points), points))
    else:
        rows = [_row(plan, pt) for pt in points]
    return SweepReport(plan, rows)


def envelope(values) -> float:
    """max / min of positive values."""
    v = np.asarray(values, dtype=float)
    return float(v.max() / v.min()) if v.min() > 0 else math.inf
