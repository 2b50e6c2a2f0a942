"""Simplex start grids, multi-start maximisation and a resumable record store.

Each row of Theta gets an equally spaced lattice of interior points: free
entries take values k/g (k >= 1) and the row remainder must stay strictly
positive. The Theta grid is the Cartesian product of the row lattices,
enumerated row-major (row 1 is the slowest-varying digit).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import multiprocessing as mp
import os
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .core import ConstraintMask, CountMatrix, ThetaParam
from .likelihood import LikelihoodContext
from .optimizer import ConvergenceRecord, OptimizerSettings, Problem, Status, maximize

TIE_REL_TOL = 1e-9
STORE_VERSION = 1
RECORDS_FILE = "records.bin"
MANIFEST_FILE = "manifest.json"


class StoreError(RuntimeError):
    pass


class FingerprintMismatchError(StoreError):
    pass


def row_lattice(fixed_row: np.ndarray, g: int) -> np.ndarray:
    """Interior lattice for one Theta row: array of shape (count, s-1)."""
    if g < 2:
        raise ValueError("grid denominators must be at least 2")
    free = np.isnan(fixed_row)
    base = np.where(free, 0.0, fixed_row)
    nf = int(free.sum())
    if nf == 0:
        return base[None, :].copy()
    # integer budget: sum of free indices must keep the remainder positive
    budget = (1.0 - base.sum()) * g
    limit = math.ceil(budget - 1e-9) - 1
    pts = []
    for ks in itertools.product(range(1, g), repeat=nf):
        if sum(ks) <= limit:
            row = base.copy()
            row[free] = np.array(ks) / g
            pts.append(row)
    return np.array(pts).reshape(-1, len(fixed_row))


@dataclass(frozen=True, eq=False)
class GridSpec:
    mask: ConstraintMask
    denominators: tuple

    def __post_init__(self):
        d = self.denominators
        if isinstance(d, (int, np.integer)):
            d = (int(d),) * self.mask.s
        d = tuple(int(x) for x in d)
        if len(d) != self.mask.s:
            raise ValueError(f"need {self.mask.s} grid denominators, got {len(d)}")
        if min(d) < 2:
            raise ValueError("grid denominators must be at least 2")
        object.__setattr__(self, "denominators", d)

    @cached_property
    def rows(self) -> list:
        return [row_lattice(self.mask.fixed[i], g) for i, g in enumerate(self.denominators)]

    @property
    def row_counts(self) -> tuple:
        return tuple(len(r) for r in self.rows)

    @property
    def total_points(self) -> int:
        return math.prod(self.row_counts)

    def point(self, m: int) -> np.ndarray:
        if not 0 <= m < self.total_points:
            raise IndexError(m)
        digits = []
        for c in reversed(self.row_counts):
            m, d = divmod(m, c)
            digits.append(d)
        digits.reverse()
        return np.array([self.rows[i][d] for i, d in enumerate(digits)])

    def to_json(self) -> dict:
        return {"denominators": list(self.denominators)}


def build_grid(spec: GridSpec, start: int = 0, stop: int | None = None):
    """Lazily yield (index, ThetaParam) for grid points start..stop-1."""
    stop = spec.total_points if stop is None else min(stop, spec.total_points)
    for m in range(start, stop):
        yield m, ThetaParam(spec.point(m))


def default_denominators(mask: ConstraintMask, scale: str = "paper") -> tuple:
    """Per-row denominators by number of free entries in the row."""
    table = {"paper": {0: 2, 1: 21, 2: 21, 3: 9, 4: 9}, "small": {0: 2, 1: 8, 2: 8, 3: 6, 4: 6}}[scale]
    return tuple(table.get(int(mask.free[i].sum()), 6) for i in range(mask.s))


# -- record store --------------------------------------------------------------


def record_dtype(s: int) -> np.dtype:
    return np.dtype([
        ("index", "<i8"),
        ("status", "<i1"),
        ("outer_iters", "<i4"),
        ("loglik", "<f8"),
        ("grad_linf", "<f8"),
        ("theta", "<f8", (s, s - 1)),
    ])


def _mask_json(mask: ConstraintMask) -> list:
    return [[None if np.isnan(v) else float(v) for v in row] for row in mask.fixed]


def search_description(ctx: LikelihoodContext, spec: GridSpec, settings: OptimizerSettings) -> dict:
    return {
        "counts": ctx.n.tolist(),
        "cycles": ctx.T,
        "mask": _mask_json(ctx.mask),
        "grid": spec.to_json(),
        "settings": {k: getattr(settings, k) for k in settings.__dataclass_fields__},
    }


def fingerprint(ctx: LikelihoodContext, spec: GridSpec, settings: OptimizerSettings) -> str:
    blob = json.dumps(search_description(ctx, spec, settings), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _from_description(desc: dict):
    counts = CountMatrix(np.array(desc["counts"]))
    mask = ConstraintMask(np.array([[np.nan if v is None else v for v in row] for row in desc["mask"]], dtype=float))
    ctx = LikelihoodContext(counts, int(desc["cycles"]), mask)
    spec = GridSpec(mask, tuple(desc["grid"]["denominators"]))
    settings = OptimizerSettings(**desc["settings"])
    return ctx, spec, settings


class RecordStore:
    """Directory holding a JSON manifest and append-only fixed-width records."""

    def __init__(self, path):
        self.path = Path(path)

    @property
    def manifest_path(self) -> Path:
        return self.path / MANIFEST_FILE

    @property
    def records_path(self) -> Path:
        return self.path / RECORDS_FILE

    def exists(self) -> bool:
        return self.manifest_path.exists()

    def create(self, ctx, spec, settings) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        if self.exists() or (self.records_path.exists() and self.records_path.stat().st_size):
            raise StoreError(f"store {self.path} already exists; use resume")
        manifest = {
            "version": STORE_VERSION,
            "fingerprint": fingerprint(ctx, spec, settings),
            "total_points": spec.total_points,
            "record_bytes": record_dtype(ctx.s).itemsize,
            "record_fields": "index:i8 status:i1 outer_iters:i4 loglik:f8 grad_linf:f8 theta:f8[s,s-1] (little-endian, packed)",
            "status_codes": {s.name: int(s) for s in Status},
            "search": search_description(ctx, spec, settings),
        }
        tmp = self.manifest_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(manifest, indent=2) + "\n")
        os.replace(tmp, self.manifest_path)
        self.records_path.touch()

    def manifest(self) -> dict:
        if not self.exists():
            raise StoreError(f"no manifest in {self.path}")
        return json.loads(self.manifest_path.read_text())

    def load(self) -> np.ndarray:
        m = self.manifest()
        s = len(m["search"]["counts"])
        dt = record_dtype(s)
        raw = self.records_path.read_bytes() if self.records_path.exists() else b""
        whole = len(raw) // dt.itemsize * dt.itemsize
        return np.frombuffer(raw[:whole], dtype=dt).copy()

    def repair(self) -> None:
        """Drop a partially written trailing record."""
        dt = record_dtype(len(self.manifest()["search"]["counts"]))
        size = self.records_path.stat().st_size
        if size % dt.itemsize:
            with open(self.records_path, "r+b") as fh:
                fh.truncate(size - size % dt.itemsize)

    def open_append(self):
        return open(self.records_path, "ab")


# -- search --------------------------------------------------------------------


def records_to_array(recs, s: int) -> np.ndarray:
    out = np.zeros(len(recs), dtype=record_dtype(s))
    for k, r in enumerate(recs):
        out[k] = (r.start_id, int(r.status), r.outer_iters, r.loglik, r.grad_linf, r.theta_final)
    return out


_worker_state = {}


def _init_worker(ctx, spec, settings):
    _worker_state.update(ctx=ctx, spec=spec, settings=settings, problem=Problem(ctx))


def _run_block(block):
    lo, hi = block
    st = _worker_state
    spec, ctx = st["spec"], st["ctx"]
    recs = [maximize(ctx, spec.point(m), st["settings"], start_id=m, problem=st["problem"]) for m in range(lo, hi)]
    return records_to_array(recs, ctx.s)


def _blocks(todo: np.ndarray, size: int):
    """Split sorted indices into contiguous (lo, hi) runs of at most size."""
    if todo.size == 0:
        return []
    breaks = np.nonzero(np.diff(todo) != 1)[0] + 1
    out = []
    for run in np.split(todo, breaks):
        lo, hi = int(run[0]), int(run[-1]) + 1
        for a in range(lo, hi, size):
            out.append((a, min(a + size, hi)))
    return out


@dataclass(eq=False)
class SearchReport:
    ctx: LikelihoodContext
    spec: GridSpec
    settings: OptimizerSettings
    records: np.ndarray  # structured, sorted by grid index
    wall_time: float = 0.0
    store_path: Path | None = None
    tie_rel_tol: float = TIE_REL_TOL
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def total_points(self) -> int:
        return self.spec.total_points

    @property
    def complete(self) -> bool:
        return len(self.records) == self.total_points

    @property
    def converged(self) -> np.ndarray:
        return self.records[self.records["status"] == int(Status.CONVERGED)]

    @property
    def completion_rate(self) -> float:
        return 100.0 * len(self.converged) / self.total_points

    @property
    def global_max_loglik(self) -> float:
        c = self.converged
        return float(c["loglik"].max()) if len(c) else -np.inf

    @property
    def argmax_set(self) -> np.ndarray:
        c = self.converged
        if not len(c):
            return np.zeros(0, dtype=np.int64)
        top = c["loglik"].max()
        keep = c["loglik"] >= top - self.tie_rel_tol * abs(top)
        return np.sort(c["index"][keep])

    @property
    def argmax(self) -> int:
        """Grid index of the best converged record (lowest index among ties)."""
        c = self.converged
        best = np.flatnonzero(c["loglik"] == c["loglik"].max())
        return int(c["index"][best].min())

    def record(self, index: int) -> ConvergenceRecord:
        pos = np.searchsorted(self.records["index"], index)
        if pos >= len(self.records) or self.records["index"][pos] != index:
            raise KeyError(index)
        r = self.records[pos]
        return ConvergenceRecord(int(r["index"]), np.array(r["theta"]), float(r["loglik"]),
                                 float(r["grad_linf"]), Status(int(r["status"])), int(r["outer_iters"]))

    def best(self) -> ConvergenceRecord:
        return self.record(self.argmax)

    def summary(self) -> dict:
        return {
            "total_points": self.total_points,
            "records": int(len(self.records)),
            "completion_rate": self.completion_rate,
            "global_max_loglik": self.global_max_loglik,
            "argmax_set": self.argmax_set.tolist(),
            "wall_time": self.wall_time,
        }


def _execute(ctx, spec, settings, todo, workers, store: RecordStore | None, stop_after, block_size):
    blocks = _blocks(np.sort(np.asarray(todo, dtype=np.int64)), block_size or max(1, min(256, len(todo) // (8 * workers) or 1)))
    parts = []
    written = 0
    fh = store.open_append() if store else None

    def sink(arr):
        nonlocal written
        if fh is not None:
            try:
                fh.write(arr.tobytes())
                fh.flush()
            except OSError as exc:
                raise StoreError(f"store write failed: {exc}") from exc
        parts.append(arr)
        written += len(arr)

    try:
        if workers <= 1:
            _init_worker(ctx, spec, settings)
            for b in blocks:
                if stop_after is not None and written >= stop_after:
                    break
                sink(_run_block(b))
        else:
            ctx_mp = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
            with ctx_mp.Pool(workers, initializer=_init_worker, initargs=(ctx, spec, settings)) as pool:
                for arr in pool.imap_unordered(_run_block, blocks):
                    sink(arr)
                    if stop_after is not None and written >= stop_after:
                        pool.terminate()
                        break
    finally:
        if fh is not None:
            fh.close()
    return parts


def _assemble(ctx, spec, settings, arrays, wall, store_path) -> SearchReport:
    dt = record_dtype(ctx.s)
    allrec = np.concatenate(arrays) if arrays else np.zeros(0, dtype=dt)
    allrec = allrec[np.argsort(allrec["index"], kind="stable")]
    if len(allrec):
        _, first = np.unique(allrec["index"], return_index=True)
        allrec = allrec[first]
    return SearchReport(ctx, spec, settings, allrec, wall, store_path)


def run_search(ctx: LikelihoodContext, spec: GridSpec, settings: OptimizerSettings = OptimizerSettings(),
               workers: int = 1, store_path=None, stop_after: int | None = None,
               block_size: int | None = None) -> SearchReport:
    """One maximize call per grid point; records stream to the store if given.

    ``stop_after`` halts scheduling once that many records are written, which
    leaves a store that ``resume_search`` can finish.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if spec.mask is not ctx.mask and not np.array_equal(spec.mask.fixed, ctx.mask.fixed, equal_nan=True):
        raise ValueError("grid mask differs from likelihood mask")
    store = None
    if store_path is not None:
        store = RecordStore(store_path)
        store.create(ctx, spec, settings)
    t0 = time.perf_counter()
    parts = _execute(ctx, spec, settings, np.arange(spec.total_points), workers, store, stop_after, block_size)
    return _assemble(ctx, spec, settings, parts, time.perf_counter() - t0, store_path and Path(store_path))


def load_report(store_path) -> SearchReport:
    store = RecordStore(store_path)
    ctx, spec, settings = _from_description(store.manifest()["search"])
    return _assemble(ctx, spec, settings, [store.load()], 0.0, Path(store_path))


def resume_search(store_path, workers: int = 1, ctx=None, spec=None, settings=None,
                  stop_after: int | None = None, block_size: int | None = None) -> SearchReport:
    """Finish an interrupted search. If ctx/spec/settings are passed they must
    match the store's fingerprint."""
    store = RecordStore(store_path)
    manifest = store.manifest()
    s_ctx, s_spec, s_settings = _from_description(manifest["search"])
    if ctx is not None or spec is not None or settings is not None:
        fp = fingerprint(ctx or s_ctx, spec or s_spec, settings or s_settings)
        if fp != manifest["fingerprint"]:
            raise FingerprintMismatchError("store fingerprint does not match the requested search; refusing to resume")
    if fingerprint(s_ctx, s_spec, s_settings) != manifest["fingerprint"]:
        raise FingerprintMismatchError("manifest is internally inconsistent")
    store.repair()
    done = store.load()
    todo = np.setdiff1d(np.arange(s_spec.total_points), done["index"])
    t0 = time.perf_counter()
    parts = _execute(s_ctx, s_spec, s_settings, todo, workers, store, stop_after, block_size)
    return _assemble(s_ctx, s_spec, s_settings, [done] + parts, time.perf_counter() - t0, Path(store_path))
