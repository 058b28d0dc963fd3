"""Step-1 micro-benchmark harness for the ssrfb kernel.

Every admissible (NB, IB) pair is timed with a batch of calls (50 by
default) read off the clock once before and once after the batch.  Two
cache-state strategies are provided: ``no-flush`` replays every call on the
same tile buffers, ``mult-call-flush-lru`` slides the reflector operands
along large backing arrays so each call reads cold data while the updated
tile pair stays in place.
"""

from __future__ import annotations

import csv
import io
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg.kernels import _ssrfb, _tsqrt
from .params import TuneParams, kernel_gflops

NO_FLUSH = "no-flush"
MULT_CALL_FLUSH_LRU = "mult-call-flush-lru"
STRATEGIES = (NO_FLUSH, MULT_CALL_FLUSH_LRU)

CSV_HEADER = ["nb", "ib", "gflops", "elapsed_total", "reps"]
FLOP_CONVENTION = "4*nb^3 flops per ssrfb call"

MIN_TIMER_RESOLUTION = 1e-6
CACHE_LINE = 64


class TimerError(RuntimeError):
    pass


def check_timer() -> float:
    """Return the monotonic timer resolution, refusing anything coarser than 1 us."""
    info = time.get_clock_info("perf_counter")
    if not info.monotonic:
        raise TimerError("perf_counter is not monotonic on this platform")
    if info.resolution > MIN_TIMER_RESOLUTION:
        raise TimerError(f"timer resolution {info.resolution:g}s is coarser than 1us")
    return info.resolution


def sweep_grid(nb_max: int = 512) -> list[TuneParams]:
    """Every even ``nb`` in ``[2, nb_max]`` paired with every divisor ``ib``."""
    if nb_max < 2:
        raise ValueError(f"nb_max must be >= 2, got {nb_max}")
    return [
        TuneParams(nb, ib)
        for nb in range(2, nb_max + 1, 2)
        for ib in range(1, nb + 1)
        if nb % ib == 0
    ]


@dataclass(frozen=True)
class KernelSample:
    params: TuneParams
    gflops: float
    elapsed_total: float
    reps: int

    @classmethod
    def from_timing(cls, params: TuneParams, reps: int, elapsed_total: float) -> KernelSample:
        if reps < 1:
            raise ValueError(f"reps must be >= 1, got {reps}")
        gflops = kernel_gflops(params.nb, reps, elapsed_total)
        return cls(params=params, gflops=gflops, elapsed_total=elapsed_total, reps=reps)

    @property
    def nb(self) -> int:
        return self.params.nb

    @property
    def ib(self) -> int:
        return self.params.ib


@dataclass
class KernelDataSet:
    samples: list[KernelSample]
    strategy: str = NO_FLUSH
    machine_label: str = ""
    timestamp: str | None = None
    flop_convention: str = field(default=FLOP_CONVENTION)

    def __post_init__(self) -> None:
        seen = set()
        for s in self.samples:
            if s.params in seen:
                raise ValueError(f"duplicate sample for {s.params}")
            seen.add(s.params)
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def __len__(self) -> int:
        return len(self.samples)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in self.samples:
            writer.writerow([s.nb, s.ib, repr(s.gflops), repr(s.elapsed_total), s.reps])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, **meta) -> KernelDataSet:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip() for h in rows[0]] != CSV_HEADER:
            raise ValueError(f"kernel CSV must start with header {','.join(CSV_HEADER)}")
        samples = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            nb, ib, gflops, elapsed, reps = row
            samples.append(
                KernelSample(TuneParams(int(nb), int(ib)), float(gflops), float(elapsed), int(reps))
            )
        return cls(samples=samples, **meta)

    def to_json(self) -> str:
        doc = {
            "strategy": self.strategy,
            "machine": self.machine_label,
            "timestamp": self.timestamp,
            "flop_convention": self.flop_convention,
            "samples": [
                {
                    "nb": s.nb,
                    "ib": s.ib,
                    "gflops": s.gflops,
                    "elapsed_total": s.elapsed_total,
                    "reps": s.reps,
                }
                for s in self.samples
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> KernelDataSet:
        doc = json.loads(text)
        samples = [
            KernelSample(TuneParams(d["nb"], d["ib"]), d["gflops"], d["elapsed_total"], d["reps"])
            for d in doc["samples"]
        ]
        return cls(
            samples=samples,
            strategy=doc["strategy"],
            machine_label=doc.get("machine", ""),
            timestamp=doc.get("timestamp"),
            flop_convention=doc.get("flop_convention", FLOP_CONVENTION),
        )

    @classmethod
    def load(cls, path) -> KernelDataSet:
        path = Path(path)
        text = path.read_text()
        return cls.from_json(text) if path.suffix == ".json" else cls.from_csv(text)


def _reflector_pair(nb: int, ib: int, rng: np.random.Generator):
    """Valid tsqrt reflectors plus a random tile pair to update."""
    r = np.asfortranarray(np.triu(rng.standard_normal((nb, nb))))
    vb = np.asfortranarray(rng.standard_normal((nb, nb)))
    t = np.zeros((ib, nb), order="F")
    _tsqrt(r, vb, t, ib)
    c1 = np.asfortranarray(rng.standard_normal((nb, nb)))
    c2 = np.asfortranarray(rng.standard_normal((nb, nb)))
    return vb, t, c1, c2


class NoFlushWorkload:
    """All calls operate on the same four buffers."""

    strategy = NO_FLUSH

    def __init__(self, params: TuneParams, seed: int = 0):
        self.params = params
        self.vb, self.t, self.c1, self.c2 = _reflector_pair(
            params.nb, params.ib, np.random.default_rng(seed)
        )

    def operands(self, rep: int):
        return self.vb, self.t, self.c1, self.c2

    def warmup(self) -> None:
        _ssrfb(self.vb, self.t, self.c1, self.c2)

    def __call__(self, rep: int) -> None:
        _ssrfb(self.vb, self.t, self.c1, self.c2)


def _line_aligned(size: int) -> np.ndarray:
    pad = CACHE_LINE // 8
    buf = np.empty(size + pad)
    skip = (-buf.ctypes.data % CACHE_LINE) // 8
    return buf[skip : skip + size]


def _round_to_line(elements: int) -> int:
    per_line = CACHE_LINE // 8
    return -(-elements // per_line) * per_line


class FlushLRUWorkload:
    """Reflector operands slide along two backing arrays, one window per call.

    Window 0 serves the warm-up call, window ``rep + 1`` serves timed call
    ``rep``; the updated tile pair is shared by all calls.  Windows start on
    cache-line boundaries so no two of them share a line.
    """

    strategy = MULT_CALL_FLUSH_LRU

    def __init__(self, params: TuneParams, reps: int, seed: int = 0):
        if reps < 1:
            raise ValueError(f"reps must be >= 1, got {reps}")
        nb, ib = params.nb, params.ib
        self.params = params
        self.reps = reps
        vb, t, self.c1, self.c2 = _reflector_pair(nb, ib, np.random.default_rng(seed))
        windows = reps + 1
        self.v_stride = _round_to_line(nb * nb)
        self.t_stride = _round_to_line(ib * nb)
        self.v_big = _line_aligned(windows * self.v_stride)
        self.t_big = _line_aligned(windows * self.t_stride)
        self.v_big.reshape(windows, self.v_stride)[:, : nb * nb] = vb.ravel(order="F")
        self.t_big.reshape(windows, self.t_stride)[:, : ib * nb] = t.ravel(order="F")

    @property
    def window_offsets(self) -> list[int]:
        """Element offsets of the reflector window used by each timed call."""
        return [(rep + 1) * self.v_stride for rep in range(self.reps)]

    def _window(self, w: int):
        nb, ib = self.params.nb, self.params.ib
        v0, t0 = w * self.v_stride, w * self.t_stride
        vb = self.v_big[v0 : v0 + nb * nb].reshape((nb, nb), order="F")
        t = self.t_big[t0 : t0 + ib * nb].reshape((ib, nb), order="F")
        return vb, t

    def operands(self, rep: int):
        vb, t = self._window(rep + 1)
        return vb, t, self.c1, self.c2

    def warmup(self) -> None:
        vb, t = self._window(0)
        _ssrfb(vb, t, self.c1, self.c2)

    def __call__(self, rep: int) -> None:
        vb, t = self._window(rep + 1)
        _ssrfb(vb, t, self.c1, self.c2)


def prepare_no_flush(params: TuneParams, seed: int = 0) -> NoFlushWorkload:
    return NoFlushWorkload(params, seed)


def prepare_mult_call_flush_lru(params: TuneParams, reps: int, seed: int = 0) -> FlushLRUWorkload:
    return FlushLRUWorkload(params, reps, seed)


def prepare_workload(params: TuneParams, reps: int, strategy: str = NO_FLUSH, seed: int = 0):
    if strategy == NO_FLUSH:
        return prepare_no_flush(params, seed)
    if strategy == MULT_CALL_FLUSH_LRU:
        return prepare_mult_call_flush_lru(params, reps, seed)
    raise ValueError(f"unknown strategy {strategy!r}")


def time_batched(workload, reps: int) -> float:
    """Seconds spent in ``reps`` calls of ``workload``, timed as one batch.

    One untimed warm-up call precedes the batch.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    check_timer()
    workload.warmup()
    start = time.perf_counter_ns()
    for rep in range(reps):
        workload(rep)
    stop = time.perf_counter_ns()
    if stop < start:
        raise TimerError("clock went backwards during a timed batch")
    return (stop - start) / 1e9


def sweep_kernel(
    backend,
    nb_max: int = 512,
    reps: int = 50,
    strategy: str = NO_FLUSH,
    machine_label: str = "",
    timestamp: str | None = None,
    progress=None,
) -> KernelDataSet:
    """Benchmark ssrfb on every pair of :func:`sweep_grid` ``(nb_max)``."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if getattr(backend, "measured", False) and threading.active_count() > 1:
        raise RuntimeError("kernel timing needs an otherwise idle process: other threads are live")
    samples = []
    grid = sweep_grid(nb_max)
    for i, params in enumerate(grid):
        elapsed = backend.kernel_elapsed(params, reps, strategy)
        samples.append(KernelSample.from_timing(params, reps, elapsed))
        if progress is not None:
            progress(i + 1, len(grid), samples[-1])
    return KernelDataSet(
        samples=samples, strategy=strategy, machine_label=machine_label, timestamp=timestamp
    )
