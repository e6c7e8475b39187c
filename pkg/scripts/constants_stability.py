#!/usr/bin/env python3
"""Refinement study of the empirical condition constants C0, C1, C2 and the
Caccioppoli ratio for a rough scalar field.

    python3 scripts/constants_stability.py --sizes 8 16 24 --contrast 10
"""

import argparse
import sys

import numpy as np

from neumannlab.coeff import ScalarCheckerboard, make_coefficient
from neumannlab.estimates import (
    caccioppoli_check,
    holder_seminorm,
    relative_spread,
    test_local_boundedness as local_boundedness_trials,
)
from neumannlab.kernel import build_kernel
from neumannlab.mesh import build_box_mesh
from neumannlab.solve import NeumannSolver, SolveConfig, solve_neumann_bounded

CENTER = np.array([0.5, 0.5, 0.5])
BALLS = [
    ((0.5, 0.5, 0.5), 0.4),
    ((0.25, 0.25, 0.5), 0.3),
    ((0.75, 0.5, 0.25), 0.35),
    ((0.125, 0.5, 0.5), 0.3),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 24])
    ap.add_argument("--contrast", type=float, default=10.0)
    ap.add_argument("--trials", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = SolveConfig()
    fld = make_coefficient(ScalarCheckerboard(args.contrast))
    f_cos = lambda p: (np.pi**2 * np.cos(np.pi * p[:, 0]))[:, None]
    dirs = np.random.default_rng(2).standard_normal((26, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    probes = CENTER + 0.25 * dirs

    table = {"C0": [], "C1": [], "C2": [], "Caccioppoli": []}
    for n in args.sizes:
        mesh = build_box_mesh((1, 1, 1), n)
        solver = NeumannSolver(mesh, fld, cfg)
        kern = build_kernel(mesh, fld, CENTER, cfg, solver=solver)
        table["C2"].append(0.25 * kern.magnitude_at(probes).max())
        _, ratio = holder_seminorm(kern.column(0), (0.25, 0.25, 0.75), 0.25, 0.5)
        table["C0"].append(ratio)
        lb = local_boundedness_trials(
            mesh, fld, trials=args.trials, seed=args.seed, solver=solver, balls=BALLS
        )
        table["C1"].append(lb.empirical_constant)
        u = solve_neumann_bounded(mesh, fld, f_cos, None, cfg, solver=solver)
        table["Caccioppoli"].append(
            caccioppoli_check(u, CENTER, 0.5, f_cos, None).empirical_constant
        )
        print(f"n={n}: " + ", ".join(f"{k}={v[-1]:.4g}" for k, v in table.items()))

    for name, seq in table.items():
        spread = relative_spread(seq)
        print(f"{name}: spread {spread:.3f} ({'bounded' if spread <= 0.5 else 'UNBOUNDED'})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
