"""Command-line driver: ``paraprod {eval,telescope,tiles,sweep}``.

Every run writes config.json (the effective configuration), its results and
manifest.json (versions, tolerances and result digests) into ``--out``.
With ``--out -`` the main result goes to stdout instead.  Exit codes: 0 on
success, 2 on usage or configuration errors, 3 when a hard invariant fails.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from . import __version__
from .errors import ParaprodError
from .grid import Grid, Signal, lp_norm
from .windows import ParamSet

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 2, 3
PARAM_FLAGS = ("L1", "L2", "M1", "M2", "n1", "n2", "m")
TOLERANCES = {"identity_rtol": 1e-8, "admissibility": 1e-12, "oracle_rtol": 1e-9}


class ConfigError(Exception):
    pass


class InvariantViolation(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: dict
    log_size: int = 10
    period: float = 1.0
    seed: int = 0
    trials: int = 1
    out: str = "-"
    format: str = "json"
    verbose: int = 0
    options: dict = field(default_factory=dict)

    @property
    def paramset(self) -> ParamSet:
        return ParamSet(**self.params)

    @property
    def grid(self) -> Grid:
        return Grid(self.log_size, self.period)

    def to_json(self) -> dict:
        # where the files land and how chatty the run was do not affect results
        d = asdict(self)
        del d["out"], d["verbose"]
        return d


def _parse_axis(text: str):
    name, sep, vals = text.partition("=")
    if not sep or not vals:
        raise argparse.ArgumentTypeError(f"--axis expects name=v1,v2,... got {text!r}")
    try:
        return name.strip(), [int(v) for v in vals.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--axis values must be integers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory, or - for stdout")
    common.add_argument("--log-size", type=int, default=10)
    common.add_argument("--period", type=float, default=1.0)
    defaults = ParamSet()
    for name in PARAM_FLAGS:
        common.add_argument(f"--{name}", type=int, default=getattr(defaults, name))
    common.add_argument("--p", type=float, default=1.5)
    common.add_argument("--p1", type=float, default=4.0)
    common.add_argument("--p2", type=float, default=4.0)
    common.add_argument("--r", type=float, default=2.0)
    common.add_argument("--epsilon", type=float, default=0.25)
    common.add_argument("--L-big", type=int, default=8)
    common.add_argument("--Gamma", type=int, default=16)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("-v", "--verbose", action="count", default=0)

    ap = argparse.ArgumentParser(prog="paraprod", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"paraprod {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a paraproduct")
    ev.add_argument("--operator", choices=("type1", "type2"), default="type1")
    ev.add_argument("--f1", help="signal JSON for f1 (- for stdin)")
    ev.add_argument("--f2", help="signal JSON for f2 (- for stdin)")
    ev.add_argument("--input-model", choices=("X_of_random_sets", "random_bandlimited"),
                    default="X_of_random_sets")

    sub.add_parser("telescope", parents=[common], help="decompose and check the telescoping identity")

    ti = sub.add_parser("tiles", parents=[common], help="organize random convex tile sets")
    ti.add_argument("--n-seeds", type=int, default=6)
    ti.add_argument("--zero-input", action="store_true", help="use f = 0")

    sw = sub.add_parser("sweep", parents=[common], help="Monte Carlo uniformity sweep")
    sw.add_argument("--axis", type=_parse_axis, action="append", required=True)
    sw.add_argument("--operator", choices=("type1", "type2"), default="type1")
    sw.add_argument("--input-model", choices=("X_of_random_sets", "random_bandlimited"),
                    default="X_of_random_sets")
    return ap


def config_from_args(args) -> RunConfig:
    params = {name: getattr(args, name) for name in PARAM_FLAGS}
    params.update(epsilon=args.epsilon, p=args.p, L_big=args.L_big)
    options = {"p1": args.p1, "p2": args.p2, "r": args.r, "Gamma": args.Gamma}
    for key in ("operator", "input_model", "n_seeds", "zero_input"):
        if hasattr(args, key):
            options[key] = getattr(args, key)
    if args.command == "eval":
        options["f1"] = args.f1
        options["f2"] = args.f2
    if args.command == "sweep":
        options["axes"] = {name: vals for name, vals in args.axis}
    default_trials = {"eval": 1, "telescope": 4, "tiles": 4, "sweep": 40}[args.command]
    return RunConfig(args.command, params, args.log_size, args.period, args.seed,
                     default_trials if args.trials is None else args.trials,
                     args.out, args.format, args.verbose, options)


# output


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


class Output:
    """Collects named text artifacts and writes them with a manifest."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.files = {}
        self.primary = None

    def add(self, name: str, text: str, primary: bool = False):
        self.files[name] = text
        if primary:
            self.primary = name

    def write(self):
        if self.cfg.out == "-":
            sys.stdout.write(self.files[self.primary])
            return
        os.makedirs(self.cfg.out, exist_ok=True)
        self.files["config.json"] = _dumps(self.cfg.to_json())
        manifest = {
            "package": "paraprod",
            "version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "tolerances": TOLERANCES,
            "files": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in sorted(self.files.items())},
        }
        self.files["manifest.json"] = _dumps(manifest)
        for name, text in self.files.items():
            with open(os.path.join(self.cfg.out, name), "w", newline="") as fh:
                fh.write(text)


def _read_signal(path: str, key: str, stdin_cache: dict) -> Signal:
    if path == "-":
        if "obj" not in stdin_cache:
            stdin_cache["obj"] = json.load(sys.stdin)
        obj = stdin_cache["obj"]
        obj = obj.get(key, obj) if "re" not in obj else obj
    else:
        with open(path) as fh:
            obj = json.load(fh)
    return Signal.from_json(obj)


def _log(cfg, msg):
    if cfg.verbose:
        print(msg, file=sys.stderr)


# commands


def cmd_eval(cfg: RunConfig) -> int:
    from .paraproduct import paraproduct_type1, paraproduct_type2
    from .sweep import draw_inputs

    params = cfg.paramset
    opts = cfg.options
    if (opts.get("f1") is None) != (opts.get("f2") is None):
        raise ConfigError("--f1 and --f2 must be given together")
    if opts.get("f1") is not None:
        cache = {}
        f1 = _read_signal(opts["f1"], "f1", cache)
        f2 = _read_signal(opts["f2"], "f2", cache)
        if f1.grid != f2.grid:
            raise ConfigError("f1 and f2 live on different grids")
    else:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
        f1, f2 = draw_inputs(cfg.grid, rng, opts["input_model"])
    op = paraproduct_type1 if opts["operator"] == "type1" else paraproduct_type2
    g = op(f1, f2, params)
    if not np.all(np.isfinite(g.samples)):
        raise InvariantViolation("non-finite paraproduct output")
    p1, p2, r = opts["p1"], opts["p2"], opts["r"]
    norms = {"f1_p1": lp_norm(f1, p1), "f2_p2": lp_norm(f2, p2), "pi_r": lp_norm(g, r),
             "pi_2": lp_norm(g, 2), "exponents": [p1, p2, r]}
    out = Output(cfg)
    if cfg.format == "csv":
        out.add("pi.csv", g.to_csv(), primary=True)
    else:
        out.add("pi.json", _dumps(g.to_json()), primary=True)
    out.add("norms.json", _dumps(norms))
    out.write()
    return EXIT_OK


def _random_triples(grid, seed, trials):
    from .sweep import draw_inputs

    f1s, f2s, f3s = [], [], []
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(child)
        a, b = draw_inputs(grid, rng, "random_bandlimited")
        c, _ = draw_inputs(grid, rng, "random_bandlimited")
        f1s.append(a)
        f2s.append(b)
        f3s.append(c)
    return f1s, f2s, f3s


def cmd_telescope(cfg: RunConfig) -> int:
    from .telescope import (check_admissible, check_identity, dropped_term_certificates, telescope_decompose,
                            truncation_certificates)

    params, grid = cfg.paramset, cfg.grid
    dec = telescope_decompose(params, grid)
    f1s, f2s, f3s = _random_triples(grid, cfg.seed, cfg.trials)
    chk = check_identity(dec, f1s, f2s, f3s, TOLERANCES["identity_rtol"])
    reports = [check_admissible(f, params, TOLERANCES["admissibility"], raise_on_fail=False) for f in dec.forms]
    certs = dropped_term_certificates(dec)
    trunc = truncation_certificates(dec)
    summary = {
        "identity_ok": chk.ok,
        "residual": dec.residual_bound,
        "lhs": [[float(z.real), float(z.imag)] for z in chk.lhs],
        "rhs": [[float(z.real), float(z.imag)] for z in chk.rhs],
        "form_count": len(dec.forms),
        "nonempty_forms": len(dec.nonempty_forms),
        "admissible": {f.label: rep.ok for f, rep in zip(dec.forms, reports)},
        "dropped_certificates": [[j, bool(ok)] for j, ok in certs],
        "truncation_certificates": [[lab, i, bool(ok)] for lab, i, ok in trunc],
    }
    out = Output(cfg)
    if cfg.format == "csv":
        rows = ["trial,lhs_re,lhs_im,rhs_re,rhs_im,abs_error"]
        for t, (a, b, e) in enumerate(zip(chk.lhs, chk.rhs, chk.abs_error)):
            rows.append(f"{t},{a.real!r},{a.imag!r},{b.real!r},{b.imag!r},{float(e)!r}")
        out.add("identity.csv", "\n".join(rows) + "\n", primary=True)
        out.add("summary.json", _dumps(summary))
    else:
        out.add("summary.json", _dumps(summary), primary=True)
    out.add("decomposition.json", dec.dumps() + "\n")
    out.write()
    _log(cfg, f"residual {dec.residual_bound:.3e}, {len(dec.forms)} forms")
    bad = [f.label for f, rep in zip(dec.forms, reports) if not rep.ok]
    if not chk.ok or bad or not all(c[-1] for c in certs) or not all(c[-1] for c in trunc):
        raise InvariantViolation(f"identity_ok={chk.ok} inadmissible={bad}")
    return EXIT_OK


def cmd_tiles(cfg: RunConfig) -> int:
    from . import tiles as T
    from .sweep import draw_inputs

    params, grid = cfg.paramset, cfg.grid
    geom = T.TileGeometry(params, grid, Gamma=cfg.options["Gamma"])
    if not geom.levels:
        raise ConfigError("no tile levels in the admissible range; lower --Gamma or raise --log-size")
    results = []
    rects = []
    ok = True
    for t, child in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.trials)):
        rng = np.random.default_rng(child)
        S = T.random_convex_tileset(geom, rng, cfg.options["n_seeds"])
        if cfg.options["zero_input"]:
            f = Signal.zeros(grid)
        else:
            f, _ = draw_inputs(grid, rng, "random_bandlimited")
        parts = dict(zip(("first", "second"), T.partition_S1_S2(S)))
        for branch, P in parts.items():
            for ell in (1, 2, 3):
                if not len(P):
                    continue
                res = T.organize(P, f, ell)
                incl, ratio = T.organize_inclusion(res, f, params.p)
                row = {"trial": t, "branch": branch, "ell": ell, "tiles": len(P), "inclusion_ok": incl,
                       "inclusion_ratio": ratio if np.isfinite(ratio) else None, **res.to_json()}
                results.append(row)
                ok &= res.halving_ok and res.tops_disjoint and incl and P.convex and res.S2.convex
        rects.append(T.rectangles_csv(S))
    out = Output(cfg)
    if cfg.format == "csv":
        lines = ["trial,branch,ell,tiles,trees,size_star_S,size_star_S2,halving_ok,tops_disjoint,inclusion_ok"]
        for r in results:
            lines.append(f"{r['trial']},{r['branch']},{r['ell']},{r['tiles']},{len(r['S1']['trees'])},"
                         f"{r['size_star_S']!r},{r['size_star_S2']!r},{int(r['halving_ok'])},"
                         f"{int(r['tops_disjoint'])},{int(r['inclusion_ok'])}")
        out.add("organize.csv", "\n".join(lines) + "\n", primary=True)
    else:
        out.add("organize.json", _dumps(results), primary=True)
    for t, text in enumerate(rects):
        out.add(f"rectangles_{t}.csv", text)
    out.write()
    if not ok:
        raise InvariantViolation("organize post-condition failed")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, jobs: int = 1) -> int:
    from .sweep import ExperimentPlan, uniformity_sweep

    o = cfg.options
    plan = ExperimentPlan(cfg.paramset, o["axes"], (o["p1"], o["p2"], o["r"]), cfg.trials, cfg.seed,
                          o["operator"], o["input_model"], cfg.log_size, cfg.period)
    rep = uniformity_sweep(plan, jobs)
    out = Output(cfg)
    if cfg.format == "csv":
        out.add("sweep.csv", rep.to_csv(), primary=True)
        out.add("sweep.json", rep.dumps() + "\n")
    else:
        out.add("sweep.json", rep.dumps() + "\n", primary=True)
        out.add("sweep.csv", rep.to_csv())
    out.add("plot_data.csv", rep.plot_data())
    out.write()
    return EXIT_OK


COMMANDS = {"eval": cmd_eval, "telescope": cmd_telescope, "tiles": cmd_tiles, "sweep": cmd_sweep}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = config_from_args(args)
        cfg.paramset, cfg.grid
        if args.command == "sweep":
            return cmd_sweep(cfg, max(1, args.jobs))
        return COMMANDS[args.command](cfg)
    except InvariantViolation as e:
        print(f"paraprod: invariant violated: {e}", file=sys.stderr)
        return EXIT_VIOLATION
    except (ConfigError, ValueError, ParaprodError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"paraprod: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
