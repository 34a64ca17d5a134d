"""Telescoping identity and admissibility over an (L1, L2, M1, M2) grid."""
import argparse
import itertools

import numpy as np

from paraprod.grid import Grid
from paraprod.sweep import draw_inputs
from paraprod.telescope import check_admissible, check_identity, telescope_decompose
from paraprod.windows import ParamSet


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--log-size", type=int, default=12)
    ap.add_argument("--triples", type=int, default=50)
    ap.add_argument("--L", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--M", type=int, nargs="+", default=[-2, -1, 0, 1, 2])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    g = Grid(args.log_size)
    kids = np.random.SeedSequence(args.seed).spawn(2 * args.triples)
    pairs = [draw_inputs(g, np.random.default_rng(k), "random_bandlimited") for k in kids]
    f1s = [a for a, _ in pairs[: args.triples]]
    f2s = [b for _, b in pairs[: args.triples]]
    f3s = [a for a, _ in pairs[args.triples:]]
    print("L1 L2 M1 M2  forms  small  large  residual    admissible")
    for L1, L2, M1, M2 in itertools.product(args.L, args.L, args.M, args.M):
        p = ParamSet(L1=L1, L2=L2, M1=M1, M2=M2)
        dec = telescope_decompose(p, g)
        chk = check_identity(dec, f1s, f2s, f3s)
        rel = float(np.max(chk.abs_error / np.maximum(1.0, np.abs(chk.lhs))))
        adm = all(check_admissible(f, p).ok for f in dec.forms)
        print(f"{L1:2d} {L2:2d} {M1:2d} {M2:2d}  {len(dec.forms):5d}  {len(dec.small_js):5d}  {len(dec.large_js):5d}"
              f"  {rel:.2e}  {adm}")


if __name__ == "__main__":
    main()
