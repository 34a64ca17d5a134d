"""Measured shadow-boundary constant for random convex trees, by level spacing."""
import argparse

import numpy as np

from paraprod import tiles as T
from paraprod.grid import Grid
from paraprod.windows import ParamSet


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--log-size", type=int, default=12)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--Gamma", type=int, nargs="+", default=[1, 2, 3, 4, 16])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for Gamma in args.Gamma:
        geom = T.TileGeometry(ParamSet(), Grid(args.log_size), Gamma=Gamma)
        rng = np.random.default_rng(args.seed)
        worst, disjoint = 0.0, True
        for _ in range(args.trees):
            tree = max(T.maximal_trees(T.random_convex_tileset(geom, rng, 6)).trees, key=lambda t: len(t.members))
            worst = max(worst, T.shadow_constant(tree))
            disjoint &= T.witnesses_disjoint(tree)
        print(f"Gamma={Gamma:3d} levels={geom.levels} C={worst:.3f} witnesses disjoint={disjoint}")


if __name__ == "__main__":
    main()
