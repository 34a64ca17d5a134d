"""Norm-ratio sweeps over (M1, M2), n1 and m, written as CSV next to a summary."""
import argparse
import json
from pathlib import Path

import numpy as np

from paraprod.sweep import ExperimentPlan, envelope, uniformity_sweep
from paraprod.windows import ParamSet


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("envelopes"))
    ap.add_argument("--log-size", type=int, default=12)
    ap.add_argument("--trials", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=4)
    ap.add_argument("--M", type=int, nargs="+", default=[-2, -1, 0, 1], help="values for both M1 and M2")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    common = dict(trials=args.trials, seed=args.seed, log_size=args.log_size)
    plans = {
        "M": ExperimentPlan(axes={"M1": args.M, "M2": args.M}, **common),
        "n1": ExperimentPlan(axes={"n1": [0, 1, -1, 2, -2, 4, -4, 8, -8]}, **common),
        "m": ExperimentPlan(base=ParamSet(M2=5), axes={"m": list(range(6))}, operator="type2", **common),
    }
    summary = {}
    for name, plan in plans.items():
        rep = uniformity_sweep(plan, args.jobs)
        (args.out / f"{name}.csv").write_text(rep.to_csv())
        (args.out / f"{name}_plot.csv").write_text(rep.plot_data())
        raw, norm = rep.column("max_ratio"), rep.column("normalized_max")
        summary[name] = {"envelope": envelope(raw), "normalized_vs_first": (norm / norm[0]).tolist()}
        print(f"{name:3s} envelope {envelope(raw):8.3f}  normalized/first max {np.max(norm / norm[0]):.3f}")
    (args.out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")


if __name__ == "__main__":
    main()
