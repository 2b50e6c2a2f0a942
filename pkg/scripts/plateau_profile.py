"""Tabulate how a stored search's top-plateau fraction depends on the level tolerance.

    python scripts/plateau_profile.py runs/study7_T2 [runs/study8_T2 ...]
"""

import sys

import numpy as np

from markovroot.analysis import detect_plateaus
from markovroot.gridsearch import load_report

REL_TOLS = (1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 1e-7)


def main(paths):
    for path in paths:
        rep = load_report(path)
        ll = np.sort(rep.converged["loglik"])[::-1]
        top = ll[0]
        print(f"{path}: M={rep.total_points}, max {top:.4f}")
        for rel in REL_TOLS:
            s = detect_plateaus(rep, rel * abs(top))
            print(f"  level tol {rel:.0e}*|max| = {rel * abs(top):8.2e}: top plateau {100 * s.global_plateau_fraction:5.1f}%"
                  f", {len(s.plateaus)} plateaus")
        for delta in (1e-3, 1e-2, 0.1, 1.0):
            print(f"  within {delta:g} of max: {100 * np.mean(ll >= top - delta) * len(ll) / rep.total_points:5.1f}%")


if __name__ == "__main__":
    main(sys.argv[1:])
