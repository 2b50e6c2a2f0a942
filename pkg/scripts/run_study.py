"""Run (or resume) a bundled study's grid search and print its analytics.

    python scripts/run_study.py study4 --cycles 2 --scale small --store runs/study4_T2
"""

import argparse
import os
from pathlib import Path

import numpy as np

from markovroot.analysis import detect_plateaus, emit_plot_data, maximizer_uniqueness
from markovroot.fixtures import load_fixture
from markovroot.gridsearch import GridSpec, resume_search, run_search


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("fixture")
    ap.add_argument("--cycles", type=int, required=True)
    ap.add_argument("--scale", choices=("small", "paper"), default="small")
    ap.add_argument("--store", type=Path, required=True)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--top-fraction", type=float, default=None)
    ap.add_argument("--plots", type=Path, default=None, help="directory for plot-data CSVs")
    args = ap.parse_args()

    fx = load_fixture(args.fixture)
    if (args.store / "manifest.json").exists():
        rep = resume_search(args.store, workers=args.workers)
    else:
        spec = GridSpec(fx.mask, fx.denominators(args.scale))
        rep = run_search(fx.context(args.cycles), spec, fx.settings(args.cycles), workers=args.workers,
                         store_path=args.store)

    np.set_printoptions(precision=4, suppress=True)
    print(f"M = {rep.total_points}, completion {rep.completion_rate:.3f}%, wall {rep.wall_time:.0f}s")
    best = rep.best()
    print(f"max loglik {best.loglik:.4f}, |grad|_inf {best.grad_linf:.3g}\n{best.matrix}")
    key = f"maximizer_T{args.cycles}" if f"maximizer_T{args.cycles}" in fx.expected else "maximizer"
    if key in fx.expected and (fx.expected[key].T in (None, args.cycles)):
        print(f"max entry difference to bundled maximizer: {np.abs(best.matrix - fx.value(key).array()).max():.4f}")
    summ = detect_plateaus(rep)
    print(f"top plateau {100 * summ.global_plateau_fraction:.1f}% of the grid (level tol {summ.level_tol:.3g})")
    for p in summ.plateaus[:6]:
        print(f"  level {p.loglik_level:.4f}  n={p.member_count}  grad in [{p.grad_linf_min:.2g}, {p.grad_linf_max:.2g}]")
    frac = args.top_fraction or max(summ.global_plateau_fraction, 1e-4)
    u = maximizer_uniqueness(rep, frac)
    print(f"top {100 * frac:.2f}% band: unique in P^T = {u.unique_in_PT}, max distance {u.max_distance:.4f}")
    if args.plots:
        for fig in ("fig2", "fig4", "distance"):
            print("wrote", emit_plot_data(rep, fig, args.plots, top_fraction=frac, prefix=args.fixture))


if __name__ == "__main__":
    main()
