"""Decision table built at install time and queried at run time.

A query ``(n, ncores)`` that was not benchmarked takes the winner of the
closest benchmarked point, where closeness is judged independently on each
axis and ties go to the larger grid value.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from ._io import write_text_atomic
from .params import TuneParams
from .sweep import BestEntry, Grid, SweepResult

FORMAT_VERSION = 1
INGEST_HEADER = ("n", "ncores", "gflops", "nb", "ib")


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TuningTable:
    grid: Grid
    entries: Mapping[tuple[int, int], BestEntry]
    heuristic: int | None = None
    payg: bool | None = None
    backend: str | None = None
    machine: str = ""
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        missing = [pt for pt in self.grid.points() if pt not in self.entries]
        if missing:
            raise ValueError(f"table has no entry for grid point(s) {missing}")
        for key, entry in self.entries.items():
            if entry.params is None:
                raise ValueError(f"entry {key} has no tuning parameters")

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "machine": self.machine,
            "backend": self.backend,
            "heuristic": self.heuristic,
            "payg": self.payg,
            "grid": self.grid.to_dict(),
            "entries": [
                {"n": n, "ncores": c, "nb": e.params.nb, "ib": e.params.ib, "gflops": e.gflops}
                for (n, c), e in sorted(self.entries.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> TuningTable:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TableFormatError(f"malformed table file: {exc}") from None
        if not isinstance(doc, dict) or "format_version" not in doc:
            raise TableFormatError("malformed table file: missing format_version")
        version = doc["format_version"]
        if version != FORMAT_VERSION:
            raise TableFormatError(
                f"unsupported table format_version {version!r} (this build reads {FORMAT_VERSION})"
            )
        try:
            entries = {
                (e["n"], e["ncores"]): BestEntry(TuneParams(e["nb"], e["ib"]), e["gflops"])
                for e in doc["entries"]
            }
            return cls(
                grid=Grid.from_dict(doc["grid"]),
                entries=entries,
                heuristic=doc["heuristic"],
                payg=doc["payg"],
                backend=doc["backend"],
                machine=doc["machine"],
                format_version=version,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TableFormatError(f"malformed table file: {exc}") from None


def build_table(
    sweep: SweepResult,
    grid: Grid | None = None,
    heuristic: int | None = None,
    backend: str | None = None,
    machine: str = "",
) -> TuningTable:
    grid = grid or sweep.grid
    if grid is None:
        raise ValueError("no grid given and the sweep carries none")
    missing = [pt for pt in grid.points() if pt not in sweep.best]
    if missing:
        raise ValueError(f"sweep does not cover grid point(s) {missing}")
    entries = {pt: sweep.best[pt] for pt in grid.points()}
    return TuningTable(
        grid=grid,
        entries=entries,
        heuristic=heuristic,
        payg=sweep.payg,
        backend=backend,
        machine=machine,
    )


def nearest(values, x: int) -> int:
    """Closest value to ``x``; equidistant ties go to the larger value."""
    return min(values, key=lambda v: (abs(v - x), -v))


def lookup_point(table: TuningTable, n: int, ncores: int) -> tuple[int, int]:
    if n < 1 or ncores < 1:
        raise ValueError(f"n and ncores must be >= 1, got n={n}, ncores={ncores}")
    return nearest(table.grid.n_values, n), nearest(table.grid.core_values, ncores)


def lookup(table: TuningTable, n: int, ncores: int) -> TuneParams:
    return table.entries[lookup_point(table, n, ncores)].params


def save_table(table: TuningTable, path) -> Path:
    return write_text_atomic(path, table.to_json())


def load_table(path) -> TuningTable:
    return TuningTable.from_json(Path(path).read_text())


def ingest_results_csv(path) -> SweepResult:
    """Parse ``n,ncores,gflops,nb,ib`` rows into a sweep-shaped result.

    ``#`` starts a comment line.  ``nb`` and ``ib`` may both be left empty
    when a published table only reports rates.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_results_csv(text, source=str(path))


def parse_results_csv(text: str, source: str = "<string>") -> SweepResult:
    best: dict[tuple[int, int], BestEntry] = {}
    header_seen = False
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        fields = [f.strip() for f in row]
        if not fields or all(f == "" for f in fields) or fields[0].startswith("#"):
            continue
        if len(fields) != len(INGEST_HEADER):
            raise ValueError(
                f"{source}:{lineno}: expected {len(INGEST_HEADER)} columns, got {len(fields)}"
            )
        if not header_seen:
            if tuple(fields) != INGEST_HEADER:
                raise ValueError(f"{source}:{lineno}: header must be {','.join(INGEST_HEADER)}")
            header_seen = True
            continue
        try:
            n, ncores, gflops = int(fields[0]), int(fields[1]), float(fields[2])
            if fields[3] == "" and fields[4] == "":
                params = None
            else:
                params = TuneParams(int(fields[3]), int(fields[4]))
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: malformed row: {exc}") from None
        if n < 1 or ncores < 1 or not gflops > 0:
            raise ValueError(f"{source}:{lineno}: n, ncores and gflops must be positive")
        if (n, ncores) in best:
            raise ValueError(f"{source}:{lineno}: duplicate row for n={n}, ncores={ncores}")
        best[(n, ncores)] = BestEntry(params, gflops)
    if not best:
        raise ValueError(f"{source}: no data rows")
    grid = Grid(tuple(sorted({n for n, _ in best})), tuple(sorted({c for _, c in best})))
    return SweepResult(samples=[], best=dict(sorted(best.items())), grid=grid)


def _best_map(x) -> Mapping[tuple[int, int], BestEntry]:
    if isinstance(x, TuningTable):
        return x.entries
    if isinstance(x, SweepResult):
        return x.best
    return x


@dataclass(frozen=True)
class ReportRow:
    n: int
    ncores: int
    reference: BestEntry
    candidate: BestEntry

    @property
    def ratio(self) -> float:
        return self.candidate.gflops / self.reference.gflops * 100.0

    @property
    def optimum(self) -> bool:
        ref, cand = self.reference, self.candidate
        if ref.params is not None and cand.params is not None:
            return ref.params == cand.params
        # rate-only tables: the optimum was found iff the rates coincide
        return ref.gflops == cand.gflops


@dataclass(frozen=True)
class RelativeReport:
    rows: tuple[ReportRow, ...]

    @property
    def average(self) -> float:
        return sum(r.ratio for r in self.rows) / len(self.rows)

    @property
    def optimum_count(self) -> int:
        return sum(r.optimum for r in self.rows)

    @property
    def total(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "ncores", "ref_nb", "ref_ib", "ref_gflops", "nb", "ib", "gflops", "ratio_pct", "optimum"])
        for r in self.rows:
            ref, cand = r.reference, r.candidate
            writer.writerow(
                [
                    r.n,
                    r.ncores,
                    ref.params.nb if ref.params else "",
                    ref.params.ib if ref.params else "",
                    repr(ref.gflops),
                    cand.params.nb if cand.params else "",
                    cand.params.ib if cand.params else "",
                    repr(cand.gflops),
                    f"{r.ratio:.2f}",
                    int(r.optimum),
                ]
            )
        return buf.getvalue()

    def summary(self) -> str:
        return f"avg {self.average:.2f}%  optimum {self.optimum_count}/{self.total}"


def relative_report(reference, candidate) -> RelativeReport:
    """Candidate rates as a percentage of the reference, point by point."""
    ref, cand = _best_map(reference), _best_map(candidate)
    if set(ref) != set(cand):
        only_ref = sorted(set(ref) - set(cand))
        only_cand = sorted(set(cand) - set(ref))
        raise ValueError(f"grids differ: only in reference {only_ref}, only in candidate {only_cand}")
    if not ref:
        raise ValueError("nothing to compare")
    rows = tuple(ReportRow(n, c, ref[(n, c)], cand[(n, c)]) for n, c in sorted(ref))
    return RelativeReport(rows)
