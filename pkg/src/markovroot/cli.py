"""Command-line interface: ``python -m markovroot <command> ...``.

Exit codes: 0 success, 1 computational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, gridsearch
from .core import (STOCH_TOL, ConstraintMask, CountMatrix, StochasticMatrix, ThetaParam, ValidationError,
                   interval_mle, read_matrix_csv)
from .fixtures import fixture_names, load_fixture
from .likelihood import LikelihoodContext, gradient
from .optimizer import OptimizerSettings, Status, maximize
from .spectral import (DefectiveMatrixError, EnumerationInfeasibleError, NoRealRootError, eigen_decompose,
                       enumerate_real_roots)

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def simulate_counts(p, t: int, row_totals, seed: int | None = None) -> CountMatrix:
    """Draw interval counts: row i is multinomial(row_totals[i], (P^T)_i.)."""
    p = p.p if isinstance(p, StochasticMatrix) else StochasticMatrix(np.asarray(p, dtype=float)).p
    totals = np.asarray(row_totals, dtype=np.int64)
    if totals.shape != (p.shape[0],) or np.any(totals < 0):
        raise ValidationError("need one nonnegative row total per state")
    if totals.sum() == 0:
        raise ValidationError("at least one row total must be positive")
    q = np.clip(np.linalg.matrix_power(p, t), 0.0, None)
    q /= q.sum(axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    return CountMatrix(np.stack([rng.multinomial(n, row) for n, row in zip(totals, q)]))


def _fmt_matrix(a: np.ndarray, fmt: str = "{:.6f}") -> str:
    return "\n".join(",".join(fmt.format(v) for v in row) for row in np.asarray(a))


def _fmt_eig(lam: complex) -> str:
    if abs(lam.imag) < 1e-12:
        return f"{lam.real:.6g}"
    return f"{lam.real:.6g}{lam.imag:+.6g}i"


# -- input resolution ----------------------------------------------------------


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from None


def _inputs(args, need_cycles: bool = True):
    """(name, counts, mask, T, fixture) from --fixture or --counts/--mask/--cycles."""
    fx = None
    if getattr(args, "fixture", None):
        try:
            fx = load_fixture(args.fixture)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        counts, mask = fx.counts, fx.mask
        t = args.cycles if getattr(args, "cycles", None) is not None else fx.cycles[0]
        name = fx.name
    else:
        if not args.counts:
            raise UsageError("either --fixture or --counts is required")
        counts = CountMatrix.from_csv(_existing(args.counts))
        mask = ConstraintMask.from_csv(_existing(args.mask)) if args.mask else ConstraintMask.unconstrained(counts.s)
        t = getattr(args, "cycles", None)
        name = Path(args.counts).stem
    if need_cycles and t is None:
        raise UsageError("--cycles is required")
    return name, counts, mask, t, fx


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {p}")
    return p


_SETTING_FLAGS = ("outer_rel_tol", "inner_abs_tol", "inner_rel_tol", "barrier_mu", "max_outer_iters",
                  "max_inner_iters", "schedule")


def _add_setting_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--settings", help="key = value settings file")
    for name in _SETTING_FLAGS:
        typ = int if name.startswith("max_") else (str if name == "schedule" else float)
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)


def _settings(args, fx=None, t=None) -> OptimizerSettings:
    base = fx.settings(t) if fx is not None else OptimizerSettings()
    if args.settings:
        base = OptimizerSettings.from_file(_existing(args.settings), base)
    over = {k: getattr(args, k) for k in _SETTING_FLAGS if getattr(args, k, None) is not None}
    return base.replace(**over) if over else base


# -- commands ------------------------------------------------------------------


def cmd_mle(args) -> int:
    name, counts, mask, t, fx = _inputs(args, need_cycles=False)
    pt = interval_mle(counts, mask)
    print("# interval MLE")
    print(_fmt_matrix(pt.p))
    if t is None:
        return EXIT_OK
    ctx = LikelihoodContext(counts, t, mask)
    settings = _settings(args, fx, t)
    rec = maximize(ctx, _centre_start(mask), settings)
    if rec.status == Status.FAILED_NONFINITE:
        print(f"error: optimisation failed at a nonfinite objective", file=sys.stderr)
        return EXIT_COMPUTE
    print(f"# single-cycle estimate, T={t}, single start at the simplex centre")
    print(_fmt_matrix(rec.matrix))
    print(f"# loglik = {rec.loglik:.10g}")
    print("# gradient")
    print(_fmt_matrix(gradient(ctx, rec.theta_final), "{:.6g}"))
    return EXIT_OK


def _centre_start(mask: ConstraintMask) -> ThetaParam:
    th = np.where(mask.free, 0.0, np.nan_to_num(mask.fixed))
    for i in range(mask.s):
        nf = int(mask.free[i].sum())
        if nf:
            th[i, mask.free[i]] = (1.0 - th[i].sum()) / (nf + 1)
    return ThetaParam(th)


def root_report(p: np.ndarray, t: int, budget: int = 100_000) -> tuple[list, str]:
    """Structured lines plus a one-line classification."""
    lines = []
    if np.allclose(p, np.eye(len(p)), atol=STOCH_TOL, rtol=0):
        lines.append("eigenvalues: " + ", ".join("1" for _ in range(len(p))))
        lines.append("candidate index=1 branches=() min_entry=0 stochastic=yes")
        return lines, "stochastic root found: identity"
    es = eigen_decompose(p)
    lines.append("eigenvalues: " + ", ".join(_fmt_eig(v) for v in es.eigenvalues))
    lines.append(f"positive_real r={es.r} complex_pairs c={es.c} negative={'yes' if es.has_negative else 'no'}")
    neg = [v.real for v in es.nonunit if v.imag == 0 and v.real < 0]
    if t % 2 == 0 and neg:
        shown = ", ".join(f"{v:.3f}" for v in neg)
        word = "eigenvalue" if len(neg) == 1 else "eigenvalues"
        return lines, f"no real roots (negative {word} {shown})"
    cands = enumerate_real_roots(p, t, budget)
    for k, c in enumerate(cands, 1):
        lines.append(f"candidate index={k} branches={','.join(map(str, c.branch_labels))} "
                     f"min_entry={c.min_entry:.6g} stochastic={'yes' if c.is_stochastic else 'no'}")
    n_st = sum(c.is_stochastic for c in cands)
    if not cands:
        return lines, "no real roots"
    if n_st:
        return lines, f"stochastic root found: {len(cands)} real roots, {n_st} stochastic"
    return lines, f"{len(cands)} real roots, 0 stochastic"


def cmd_root(args) -> int:
    _, counts, mask, t, _ = _inputs(args)
    pt = interval_mle(counts, mask)
    lines, verdict = root_report(pt.p, t, args.budget)
    for ln in lines:
        print(ln)
    if args.show_matrices:
        for k, c in enumerate(enumerate_real_roots(pt.p, t, args.budget) if "real roots," in verdict else [], 1):
            print(f"# candidate {k}")
            print(_fmt_matrix(c.matrix))
    print(verdict)
    return EXIT_OK


def cmd_grid_search(args) -> int:
    if args.resume:
        if not args.store:
            raise UsageError("--resume needs --store")
        store = Path(args.store)
        if not (store / gridsearch.MANIFEST_FILE).exists():
            raise UsageError(f"no search store at {store}")
        report = gridsearch.resume_search(store, workers=args.workers, stop_after=args.stop_after)
    else:
        _, counts, mask, t, fx = _inputs(args)
        ctx = LikelihoodContext(counts, t, mask)
        if args.grid_denominators:
            dens = _int_list(args.grid_denominators)
            if len(dens) == 1:
                dens = dens * mask.s
        elif fx is not None:
            dens = fx.denominators(args.scale)
        else:
            dens = gridsearch.default_denominators(mask, args.scale)
        try:
            spec = gridsearch.GridSpec(mask, tuple(dens))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        settings = _settings(args, fx, t)
        report = gridsearch.run_search(ctx, spec, settings, workers=args.workers, store_path=args.store,
                                       stop_after=args.stop_after)
    _print_summary(report)
    return EXIT_OK


def _print_summary(report) -> None:
    for k, v in report.summary().items():
        print(f"{k}: {v}")
    if len(report.converged):
        print("# global maximiser")
        print(_fmt_matrix(report.best().matrix))


def cmd_analyze(args) -> int:
    store = Path(args.store)
    if not (store / gridsearch.MANIFEST_FILE).exists():
        raise UsageError(f"no search store at {store}")
    report = gridsearch.load_report(store)
    if not len(report.converged):
        print("error: no converged records in store", file=sys.stderr)
        return EXIT_COMPUTE
    summ = analysis.detect_plateaus(report, args.level_tol)
    print(f"records: {len(report.records)} of {report.total_points}, completion {report.completion_rate:.3f}%")
    print(f"global max loglik: {report.global_max_loglik:.10g} (tied starts: {len(report.argmax_set)})")
    print(f"plateaus (level tol {summ.level_tol:.3g}): {len(summ.plateaus)}")
    for k, pl in enumerate(summ.plateaus[:10], 1):
        print(f"  plateau {k}: loglik {pl.loglik_level:.8g} members {pl.member_count} "
              f"fraction {pl.fraction_of_grid:.4f} grad_linf [{pl.grad_linf_min:.3g}, {pl.grad_linf_max:.3g}]")
    frac = args.top_fraction if args.top_fraction is not None else summ.global_plateau_fraction
    u = analysis.maximizer_uniqueness(report, frac)
    print(f"top {100 * frac:.4g}% band: max L-inf distance of P^T {u.max_distance:.4g}, "
          f"unique in P^T: {'yes' if u.unique_in_PT else 'no'} ({len(u.maximizers.representatives)} representative(s))")
    advice = analysis.refinement_advice(summ)
    if advice:
        print("advice: " + advice)
    if args.emit:
        out = Path(args.out or ".")
        for fid in [x.strip() for x in args.emit.split(",") if x.strip()]:
            try:
                path = analysis.emit_plot_data(report, fid, out, top_fraction=args.top_fraction, prefix=args.prefix)
            except KeyError as exc:
                raise UsageError(exc.args[0]) from None
            print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = read_matrix_csv(_existing(args.matrix))
    totals = _int_list(args.row_totals)
    if len(totals) == 1:
        totals = totals * len(p)
    counts = simulate_counts(p, args.cycles, totals, args.seed)
    if args.out:
        counts.to_csv(args.out)
    else:
        print(_fmt_matrix(counts.counts, "{:d}"))
    return EXIT_OK


def cmd_fixtures(args) -> int:
    for name in fixture_names():
        fx = load_fixture(name)
        print(f"{name}: s={fx.counts.s} free={fx.mask.n_free} T={','.join(map(str, fx.cycles))} "
              f"small_M={gridsearch.GridSpec(fx.mask, fx.denominators('small')).total_points} - {fx.description}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _add_input_flags(p: argparse.ArgumentParser, cycles_required: bool = False) -> None:
    p.add_argument("--fixture", help="bundled dataset name (see 'fixtures list')")
    p.add_argument("--counts", help="count matrix CSV")
    p.add_argument("--mask", help="constraint mask CSV")
    p.add_argument("--cycles", type=int, help="cycles per observation interval (T)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="markovroot", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mle", help="interval MLE; with --cycles also a single-start single-cycle fit")
    _add_input_flags(p)
    _add_setting_flags(p)
    p.set_defaults(func=cmd_mle)

    p = sub.add_parser("root", help="classify the real primary T-th roots of the interval MLE")
    _add_input_flags(p)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--show-matrices", action="store_true")
    p.set_defaults(func=cmd_root)

    p = sub.add_parser("grid-search", help="multi-start barrier optimisation over a simplex grid")
    _add_input_flags(p)
    p.add_argument("--grid-denominators", help="per-row lattice denominators, comma separated")
    p.add_argument("--scale", choices=("small", "paper"), default="small")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--store", help="directory for the resumable record store")
    p.add_argument("--resume", action="store_true", help="continue the search in --store")
    p.add_argument("--stop-after", type=int, help=argparse.SUPPRESS)
    _add_setting_flags(p)
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("analyze", help="plateaus, uniqueness and plot data from a store")
    p.add_argument("--store", required=True)
    p.add_argument("--top-fraction", type=float)
    p.add_argument("--level-tol", type=float)
    p.add_argument("--emit", help="comma-separated figure ids (fig1..fig12, figS1..figS6, rank, gradient, distance)")
    p.add_argument("--out", help="output directory for CSVs")
    p.add_argument("--prefix")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="draw synthetic interval counts from a single-cycle matrix")
    p.add_argument("--matrix", required=True, help="single-cycle transition matrix CSV")
    p.add_argument("--cycles", type=int, required=True)
    p.add_argument("--row-totals", required=True, help="comma-separated totals, or one total for every row")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fixtures", help="bundled datasets")
    p.add_argument("action", choices=("list",))
    p.set_defaults(func=cmd_fixtures)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, DefectiveMatrixError, NoRealRootError, EnumerationInfeasibleError,
            gridsearch.StoreError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
