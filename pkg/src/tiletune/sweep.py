"""Step-2 driver: full factorization benchmarks over the (N, ncores) grid.

Matrix orders are visited in increasing order.  With prune-as-you-go
enabled, once every surviving candidate has run at some N, any candidate
beaten at that N by a candidate with a strictly larger tile is dropped for
all larger N.  Each candidate is scored by its best rate over the core
counts, so it survives as long as it wins somewhere.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from ._io import write_text_atomic
from .params import TuneParams, perf_normalize

log = logging.getLogger(__name__)

DEFAULT_N_VALUES = (500, 1000, 2000, 4000, 6000, 8000, 10000)
DEFAULT_FACTOR_REPS = 6
CHECKPOINT_VERSION = 1


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    n_values: tuple[int, ...]
    core_values: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "core_values", tuple(int(c) for c in self.core_values))
        for name, vals in (("n_values", self.n_values), ("core_values", self.core_values)):
            if not vals:
                raise ValueError(f"{name} must not be empty")
            if vals[0] < 1 or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be positive and strictly increasing: {vals}")

    def points(self) -> list[tuple[int, int]]:
        return [(n, c) for n in self.n_values for c in self.core_values]

    def __len__(self) -> int:
        return len(self.n_values) * len(self.core_values)

    def to_dict(self) -> dict:
        return {"n": list(self.n_values), "cores": list(self.core_values)}

    @classmethod
    def from_dict(cls, d: dict) -> Grid:
        return cls(tuple(d["n"]), tuple(d["cores"]))


def plan_grid(max_cores: int, n_values=DEFAULT_N_VALUES) -> Grid:
    """Powers of two up to ``max_cores``, plus ``max_cores`` itself."""
    if max_cores < 1:
        raise ValueError(f"max_cores must be >= 1, got {max_cores}")
    cores = []
    c = 1
    while c <= max_cores:
        cores.append(c)
        c *= 2
    if cores[-1] != max_cores:
        cores.append(max_cores)
    return Grid(tuple(sorted(n_values)), tuple(cores))


@dataclass(frozen=True)
class FactorSample:
    n: int
    ncores: int
    params: TuneParams
    gflops: float
    reps: int = DEFAULT_FACTOR_REPS


@dataclass(frozen=True)
class BestEntry:
    """Winner at one grid point.  ``params`` is None for ingested rows that omit it."""

    params: TuneParams | None
    gflops: float


@dataclass(frozen=True)
class Discard:
    n: int
    params: TuneParams
    gflops: float
    by: TuneParams
    by_gflops: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "nb": self.params.nb,
            "ib": self.params.ib,
            "gflops": self.gflops,
            "by_nb": self.by.nb,
            "by_ib": self.by.ib,
            "by_gflops": self.by_gflops,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Discard:
        return cls(
            d["n"], TuneParams(d["nb"], d["ib"]), d["gflops"], TuneParams(d["by_nb"], d["by_ib"]), d["by_gflops"]
        )


def compute_best(samples) -> dict[tuple[int, int], BestEntry]:
    """Highest rate per ``(n, ncores)``; the first sample wins ties."""
    best: dict[tuple[int, int], BestEntry] = {}
    for s in samples:
        key = (s.n, s.ncores)
        if key not in best or s.gflops > best[key].gflops:
            best[key] = BestEntry(s.params, s.gflops)
    return dict(sorted(best.items()))


@dataclass
class SweepResult:
    samples: list[FactorSample]
    best: dict[tuple[int, int], BestEntry]
    pruning_log: list[Discard] = field(default_factory=list)
    run_count: int = 0
    grid: Grid | None = None
    payg: bool = False

    CSV_HEADER = ("n", "ncores", "nb", "ib", "gflops", "reps")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_HEADER)
        for s in self.samples:
            writer.writerow([s.n, s.ncores, s.params.nb, s.params.ib, repr(s.gflops), s.reps])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict() if self.grid else None,
            "payg": self.payg,
            "run_count": self.run_count,
            "samples": [_sample_dict(s) for s in self.samples],
            "best": [
                {
                    "n": n,
                    "ncores": c,
                    "nb": e.params.nb if e.params else None,
                    "ib": e.params.ib if e.params else None,
                    "gflops": e.gflops,
                }
                for (n, c), e in self.best.items()
            ],
            "pruning_log": [d.to_dict() for d in self.pruning_log],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> SweepResult:
        best = {}
        for d in doc["best"]:
            params = TuneParams(d["nb"], d["ib"]) if d.get("nb") is not None else None
            best[(d["n"], d["ncores"])] = BestEntry(params, d["gflops"])
        return cls(
            samples=[_sample_from(d) for d in doc["samples"]],
            best=best,
            pruning_log=[Discard.from_dict(d) for d in doc["pruning_log"]],
            run_count=doc["run_count"],
            grid=Grid.from_dict(doc["grid"]) if doc.get("grid") else None,
            payg=doc.get("payg", False),
        )

    @classmethod
    def from_json(cls, text: str) -> SweepResult:
        return cls.from_dict(json.loads(text))


def _sample_dict(s: FactorSample) -> dict:
    return {
        "n": s.n,
        "ncores": s.ncores,
        "nb": s.params.nb,
        "ib": s.params.ib,
        "gflops": s.gflops,
        "reps": s.reps,
    }


def _sample_from(d: dict) -> FactorSample:
    return FactorSample(d["n"], d["ncores"], TuneParams(d["nb"], d["ib"]), d["gflops"], d["reps"])


def run_point(backend, n: int, ncores: int, params: TuneParams, reps: int = DEFAULT_FACTOR_REPS) -> FactorSample:
    """Run ``reps`` factorizations and keep the median time."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if params.nb > n:
        raise ValueError(f"tile larger than matrix: nb={params.nb} > n={n}")
    times = backend.factor_times(n, ncores, params, reps)
    if len(times) != reps:
        raise SweepError(f"backend returned {len(times)} timings, expected {reps}")
    return FactorSample(n, ncores, params, perf_normalize(n, statistics.median(times)), reps)


def find_dominated(results) -> dict[TuneParams, tuple[TuneParams, float]]:
    """Map each dominated candidate to the larger-tile candidate that beats it.

    ``results`` is an iterable of ``(params, gflops)`` at a single N.  When
    several candidates qualify, the fastest one (then the largest tile) is
    cited.
    """
    results = list(results)
    dominated = {}
    for p2, g2 in results:
        killers = [(g1, p1.nb, p1) for p1, g1 in results if p1.nb > p2.nb and g1 > g2]
        if killers:
            g1, _, p1 = max(killers, key=lambda k: (k[0], k[1]))
            dominated[p2] = (p1, g1)
    return dominated


def payg_prune(candidates, results_at_n) -> list[TuneParams]:
    """Drop every candidate outperformed by one with a strictly larger tile."""
    results = dict(results_at_n)
    missing = [p for p in candidates if p not in results]
    if missing:
        raise SweepError(f"no result for candidate(s) {', '.join(map(str, missing))}")
    dominated = find_dominated((p, results[p]) for p in candidates)
    return [p for p in candidates if p not in dominated]


def _candidate_params(candidates) -> list[TuneParams]:
    params = list(getattr(candidates, "params", candidates))
    if not params:
        raise SweepError("step 2 needs at least one candidate")
    return params


@dataclass
class _State:
    completed: list[int]
    active: list[TuneParams]
    samples: list[FactorSample]
    pruning_log: list[Discard]
    run_count: int


def _checkpoint_doc(state: _State, meta: dict) -> str:
    doc = dict(meta)
    doc.update(
        completed_n=state.completed,
        active=[[p.nb, p.ib] for p in state.active],
        samples=[_sample_dict(s) for s in state.samples],
        pruning_log=[d.to_dict() for d in state.pruning_log],
        run_count=state.run_count,
    )
    return json.dumps(doc, indent=2) + "\n"


def _load_checkpoint(path: Path, meta: dict) -> _State | None:
    if not path.exists():
        return None
    doc = json.loads(path.read_text())
    for key, value in meta.items():
        if doc.get(key) != value:
            raise SweepError(f"checkpoint {path} was written for a different run ({key} differs)")
    return _State(
        completed=list(doc["completed_n"]),
        active=[TuneParams(nb, ib) for nb, ib in doc["active"]],
        samples=[_sample_from(d) for d in doc["samples"]],
        pruning_log=[Discard.from_dict(d) for d in doc["pruning_log"]],
        run_count=doc["run_count"],
    )


def run_step2(
    backend,
    candidates,
    grid: Grid,
    payg: bool = True,
    reps: int = DEFAULT_FACTOR_REPS,
    checkpoint=None,
    resume: bool = False,
) -> SweepResult:
    """Benchmark every candidate over ``grid`` in increasing N.

    ``checkpoint`` names a JSON file rewritten after each completed N; with
    ``resume`` an existing one is picked up and finished N values skipped.
    """
    params = _candidate_params(candidates)
    meta = {
        "version": CHECKPOINT_VERSION,
        "backend": getattr(backend, "tag", None),
        "grid": grid.to_dict(),
        "candidates": [[p.nb, p.ib] for p in params],
        "payg": payg,
        "reps": reps,
    }
    checkpoint = Path(checkpoint) if checkpoint else None
    state = _load_checkpoint(checkpoint, meta) if (checkpoint and resume) else None
    if state is None:
        state = _State(completed=[], active=list(params), samples=[], pruning_log=[], run_count=0)
    elif state.completed:
        log.info("resuming step 2 after n=%d", state.completed[-1])

    for n in grid.n_values:
        if n in state.completed:
            continue
        runnable = [p for p in state.active if p.nb <= n]
        if not runnable:
            raise SweepError(f"no candidate has nb <= n={n}")
        peak: dict[TuneParams, float] = {}
        for p in runnable:
            for c in grid.core_values:
                sample = run_point(backend, n, c, p, reps)
                state.samples.append(sample)
                state.run_count += 1
                peak[p] = max(peak.get(p, 0.0), sample.gflops)
        if payg:
            dominated = find_dominated(peak.items())
            for p in runnable:
                if p in dominated:
                    by, by_gflops = dominated[p]
                    state.pruning_log.append(Discard(n, p, peak[p], by, by_gflops))
            survivors = set(payg_prune(runnable, peak))
            state.active = [p for p in state.active if p.nb > n or p in survivors]
            if dominated:
                log.info("n=%d: pruned %s", n, ", ".join(str(p) for p in sorted(dominated)))
        state.completed.append(n)
        if checkpoint:
            write_text_atomic(checkpoint, _checkpoint_doc(state, meta))

    best = compute_best(state.samples)
    missing = [pt for pt in grid.points() if pt not in best]
    if missing:
        raise SweepError(f"grid points without a result: {missing}")
    return SweepResult(
        samples=state.samples,
        best=best,
        pruning_log=state.pruning_log,
        run_count=state.run_count,
        grid=grid,
        payg=payg,
    )
