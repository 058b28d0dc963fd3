"""Step-1 pruning of the (NB, IB) search space.

The IB axis is collapsed first (per NB, keep the IB with the best kernel
rate), then the upper convex hull of the remaining (NB, Gflop/s) cloud is
taken.  Heuristic 0 keeps the whole hull; heuristics 1 and 2 keep at most
``cap`` hull points ranked by incoming slope, globally (1) or per
equal-width NB interval (2).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .kernelbench import KernelDataSet
from .params import TuneParams

DEFAULT_CAP = 8
HEURISTICS = (0, 1, 2)


@dataclass(frozen=True)
class PrunedPoint:
    nb: int
    best_ib: int
    gflops: float

    @property
    def params(self) -> TuneParams:
        return TuneParams(self.nb, self.best_ib)


@dataclass(frozen=True)
class CandidateSet:
    heuristic: int
    points: tuple[PrunedPoint, ...]
    cap: int = DEFAULT_CAP

    def __post_init__(self) -> None:
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}, got {self.heuristic!r}")
        nbs = [p.nb for p in self.points]
        if any(b <= a for a, b in zip(nbs, nbs[1:])):
            raise ValueError("candidate nb values must be strictly increasing")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def params(self) -> list[TuneParams]:
        return [p.params for p in self.points]

    def to_json(self) -> str:
        doc = {
            "heuristic": self.heuristic,
            "cap": self.cap,
            "points": [{"nb": p.nb, "ib": p.best_ib, "gflops": p.gflops} for p in self.points],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> CandidateSet:
        doc = json.loads(text)
        points = tuple(PrunedPoint(d["nb"], d["ib"], d["gflops"]) for d in doc["points"])
        return cls(heuristic=doc["heuristic"], points=points, cap=doc["cap"])


def orthogonal_prune(ds: KernelDataSet) -> list[PrunedPoint]:
    """One point per NB carrying the IB with the highest rate.

    Equal rates resolve to the larger IB.
    """
    if not ds.samples:
        raise ValueError("cannot prune an empty kernel dataset")
    best: dict[int, PrunedPoint] = {}
    for s in ds.samples:
        cur = best.get(s.nb)
        if cur is None or (s.gflops, s.ib) > (cur.gflops, cur.best_ib):
            best[s.nb] = PrunedPoint(s.nb, s.ib, s.gflops)
    return [best[nb] for nb in sorted(best)]


def _cross(o: PrunedPoint, a: PrunedPoint, b: PrunedPoint) -> float:
    return (a.nb - o.nb) * (b.gflops - o.gflops) - (a.gflops - o.gflops) * (b.nb - o.nb)


def upper_hull(points: list[PrunedPoint]) -> list[PrunedPoint]:
    """Upper convex hull in increasing NB; collinear interior points dropped."""
    if not points:
        raise ValueError("upper_hull needs at least one point")
    pts = sorted(points, key=lambda p: p.nb)
    if any(a.nb == b.nb for a, b in zip(pts, pts[1:])):
        raise ValueError("upper_hull needs distinct nb values")
    hull: list[PrunedPoint] = []
    for p in pts:
        # pop while the last turn is not strictly clockwise
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) >= 0:
            hull.pop()
        hull.append(p)
    return hull


def incoming_slopes(hull: list[PrunedPoint]) -> list[float]:
    """Slope of the segment ending at each hull point after the first."""
    return [(b.gflops - a.gflops) / (b.nb - a.nb) for a, b in zip(hull, hull[1:])]


def heuristic1(hull: list[PrunedPoint], cap: int = DEFAULT_CAP) -> CandidateSet:
    """Keep the ``cap`` hull points that follow the steepest segments."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    if len(hull) == 1:
        return CandidateSet(1, tuple(hull), cap)
    slopes = incoming_slopes(hull)
    ranked = sorted(range(len(slopes)), key=lambda i: (-slopes[i], hull[i + 1].nb))
    chosen = sorted(ranked[:cap])
    return CandidateSet(1, tuple(hull[i + 1] for i in chosen), cap)


def iso_interval(nb: int, lo: int, hi: int, count: int) -> int:
    """Index of the equal-width interval of ``[lo, hi]`` holding ``nb``.

    Intervals are half-open except the last, which is closed.
    """
    if hi == lo:
        return 0
    return min((nb - lo) * count // (hi - lo), count - 1)


def heuristic2(hull: list[PrunedPoint], cap: int = DEFAULT_CAP) -> CandidateSet:
    """Split the NB range into ``cap`` intervals; keep the steepest point of each."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    if len(hull) < 2:
        raise ValueError("heuristic 2 needs a hull with at least two points")
    lo, hi = hull[0].nb, hull[-1].nb
    slopes = incoming_slopes(hull)
    best: dict[int, int] = {}
    for i, slope in enumerate(slopes):
        bucket = iso_interval(hull[i + 1].nb, lo, hi, cap)
        if bucket not in best or slope > slopes[best[bucket]]:
            best[bucket] = i
    chosen = sorted(best.values())
    return CandidateSet(2, tuple(hull[i + 1] for i in chosen), cap)


def preselect(ds: KernelDataSet, heuristic: int = 2, cap: int = DEFAULT_CAP) -> CandidateSet:
    if heuristic not in HEURISTICS:
        raise ValueError(f"heuristic must be one of {HEURISTICS}, got {heuristic!r}")
    hull = upper_hull(orthogonal_prune(ds))
    if heuristic == 0:
        return CandidateSet(0, tuple(hull), cap)
    if heuristic == 1:
        return heuristic1(hull, cap)
    if len(hull) == 1:
        return CandidateSet(2, tuple(hull), cap)
    return heuristic2(hull, cap)


@dataclass
class SelectionReport:
    """Every kernel sample next to the pruning stage it survived."""

    rows: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["nb", "ib", "gflops", "max_ib", "hull", "selected"])
        for r in self.rows:
            writer.writerow(
                [r["nb"], r["ib"], repr(r["gflops"]), int(r["max_ib"]), int(r["hull"]), int(r["selected"])]
            )
        return buf.getvalue()


def selection_report(ds: KernelDataSet, candidates: CandidateSet) -> SelectionReport:
    """Table behind a kernel-rate scatter plot with the pre-selected points marked."""
    pruned = {(p.nb, p.best_ib) for p in orthogonal_prune(ds)}
    hull = {(p.nb, p.best_ib) for p in upper_hull(orthogonal_prune(ds))}
    chosen = {(p.nb, p.best_ib) for p in candidates.points}
    rows = [
        {
            "nb": s.nb,
            "ib": s.ib,
            "gflops": s.gflops,
            "max_ib": (s.nb, s.ib) in pruned,
            "hull": (s.nb, s.ib) in hull,
            "selected": (s.nb, s.ib) in chosen,
        }
        for s in sorted(ds.samples, key=lambda s: (s.nb, s.ib))
    ]
    return SelectionReport(rows)
