"""Command-line entry point: ``tiletune {autotune,lookup,factorize,report}``.

Exit codes: 0 success, 1 runtime or data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import write_text_atomic
from .backend import ENV_VAR, backend_from_env
from .decision import (
    TuningTable,
    build_table,
    ingest_results_csv,
    load_table,
    lookup,
    relative_report,
)
from .kernelbench import NO_FLUSH, STRATEGIES, KernelDataSet, sweep_kernel
from .linalg import check_factorization, read_matrix, tile_qr
from .preselect import DEFAULT_CAP, CandidateSet, preselect, selection_report
from .sweep import DEFAULT_FACTOR_REPS, DEFAULT_N_VALUES, SweepResult, plan_grid, run_step2

log = logging.getLogger("tiletune")

ARTIFACTS = ("kernels.csv", "kernels.json", "candidates.json", "sweep.csv", "sweep.json", "table.json")
CHECKPOINT = "sweep.checkpoint.json"
FACTORIZE_TOLERANCE = 1e-10


@dataclass
class RunConfig:
    backend: str = "measured"
    heuristic: int = 2
    payg: bool = True
    nb_max: int = 512
    reps_kernel: int = 50
    reps_factor: int = DEFAULT_FACTOR_REPS
    max_cores: int = field(default_factory=lambda: os.cpu_count() or 1)
    n_values: tuple[int, ...] = DEFAULT_N_VALUES
    strategy: str = NO_FLUSH
    cap: int = DEFAULT_CAP
    out_dir: Path = Path("tiletune-out")
    machine: str = ""
    resume: bool = False

    def __post_init__(self) -> None:
        if self.heuristic not in (0, 1, 2):
            raise ValueError(f"heuristic must be 0, 1 or 2, got {self.heuristic}")
        for name in ("nb_max", "reps_kernel", "reps_factor", "max_cores", "cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.nb_max < 2:
            raise ValueError("nb_max must be >= 2")
        if not self.n_values or min(self.n_values) < 1:
            raise ValueError("n_values must be positive")


def _hms(seconds: float) -> str:
    s = int(round(seconds))
    return f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}"


def cmd_autotune(config: RunConfig) -> int:
    backend = backend_from_env(config.backend)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def stage(name: str, text: str) -> None:
        write_text_atomic(out / f"{name}.partial", text)

    timestamp = None
    if getattr(backend, "measured", False):
        timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    machine = config.machine or (os.uname().nodename if backend.measured else backend.tag)

    t0 = time.monotonic()
    kernels = sweep_kernel(
        backend,
        nb_max=config.nb_max,
        reps=config.reps_kernel,
        strategy=config.strategy,
        machine_label=machine,
        timestamp=timestamp,
    )
    stage("kernels.csv", kernels.to_csv())
    stage("kernels.json", kernels.to_json())
    candidates = preselect(kernels, config.heuristic, config.cap)
    stage("candidates.json", candidates.to_json())
    step1 = time.monotonic() - t0
    log.info(
        "step 1: %s, %d kernel samples, %d candidates (%s)",
        _hms(step1), len(kernels), len(candidates), " ".join(map(str, candidates.params)),
    )

    t1 = time.monotonic()
    grid = plan_grid(config.max_cores, config.n_values)
    sweep = run_step2(
        backend,
        candidates,
        grid,
        payg=config.payg,
        reps=config.reps_factor,
        checkpoint=out / CHECKPOINT,
        resume=config.resume,
    )
    stage("sweep.csv", sweep.to_csv())
    stage("sweep.json", sweep.to_json())
    table = build_table(
        sweep, grid, heuristic=config.heuristic, backend=backend.tag, machine=machine
    )
    stage("table.json", table.to_json())
    step2 = time.monotonic() - t1
    log.info(
        "step 2: %s, %d factorization runs, %d pruned (%s)",
        _hms(step2), sweep.run_count, len(sweep.pruning_log), "PSPAYG" if config.payg else "PS",
    )

    for name in ARTIFACTS:
        os.replace(out / f"{name}.partial", out / name)
    (out / CHECKPOINT).unlink(missing_ok=True)
    print(f"step1 {_hms(step1)}  step2 {_hms(step2)}  runs {sweep.run_count}  table {out / 'table.json'}")
    return 0


def cmd_lookup(table_path, n: int, ncores: int) -> int:
    table = load_table(table_path)
    params = lookup(table, n, ncores)
    print(f"nb={params.nb} ib={params.ib}")
    return 0


def cmd_factorize(table_path, n: int, ncores: int, matrix_path=None, seed: int = 0) -> int:
    table = load_table(table_path)
    if matrix_path is not None:
        a, _ = read_matrix(matrix_path)
        if a.shape[0] != n:
            raise ValueError(f"matrix in {matrix_path} has order {a.shape[0]}, not {n}")
    else:
        a = np.random.default_rng(seed).standard_normal((n, n))
    params = lookup(table, n, ncores)
    if params.nb > n:
        raise ValueError(
            f"looked-up tile size nb={params.nb} exceeds the matrix order n={n}; "
            "the table has no entry small enough for this matrix"
        )
    factors, perf = tile_qr(a, params, ncores)
    residual, orthogonality = check_factorization(a, factors)
    print(
        f"nb={params.nb} ib={params.ib} gflops={perf.gflops:.4f} "
        f"elapsed={perf.elapsed:.6f} residual={residual:.3e} orthogonality={orthogonality:.3e}"
    )
    if not residual <= FACTORIZE_TOLERANCE:
        print(f"residual {residual:.3e} above {FACTORIZE_TOLERANCE:g}", file=sys.stderr)
        return 1
    return 0


def _load_results(path):
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if "format_version" in doc:
            return TuningTable.from_json(path.read_text())
        return SweepResult.from_dict(doc)
    return ingest_results_csv(path)


def _emit(text: str, out) -> None:
    if out:
        write_text_atomic(out, text)
    else:
        sys.stdout.write(text)


def cmd_report(kind: str, inputs: list, out=None) -> int:
    if kind == "ratio":
        report = relative_report(_load_results(inputs[0]), _load_results(inputs[1]))
        _emit(report.to_csv(), out)
        print(report.summary())
    elif kind == "selection":
        kernels = KernelDataSet.load(inputs[0])
        candidates = CandidateSet.from_json(Path(inputs[1]).read_text())
        _emit(selection_report(kernels, candidates).to_csv(), out)
    elif kind == "curves":
        sweep = _load_results(inputs[0])
        rows = sorted(sweep.samples, key=lambda s: (s.ncores, s.params, s.n))
        lines = ["ncores,nb,ib,n,gflops"]
        lines += [f"{s.ncores},{s.params.nb},{s.params.ib},{s.n},{s.gflops!r}" for s in rows]
        _emit("\n".join(lines) + "\n", out)
    else:
        raise ValueError(f"unknown report {kind!r}")
    return 0


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(sorted({_positive(v) for v in text.split(",") if v.strip()}))
    except argparse.ArgumentTypeError:
        raise argparse.ArgumentTypeError(f"expected comma-separated positive integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiletune", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    at = sub.add_parser("autotune", help="run step 1 and step 2 and write the decision table")
    at.add_argument("--backend", default="measured", help=f"measured | synthetic:<seed> (env {ENV_VAR} wins)")
    at.add_argument("--heuristic", type=int, choices=(0, 1, 2), default=2)
    at.add_argument("--payg", action=argparse.BooleanOptionalAction, default=True)
    at.add_argument("--nb-max", type=_positive, default=512)
    at.add_argument("--reps-kernel", type=_positive, default=50)
    at.add_argument("--reps-factor", type=_positive, default=DEFAULT_FACTOR_REPS)
    at.add_argument("--n-values", type=_int_list, default=DEFAULT_N_VALUES)
    at.add_argument("--max-cores", type=_positive, default=os.cpu_count() or 1)
    at.add_argument("--strategy", choices=STRATEGIES, default=NO_FLUSH)
    at.add_argument("--cap", type=_positive, default=DEFAULT_CAP)
    at.add_argument("--machine", default="")
    at.add_argument("--out-dir", type=Path, default=Path("tiletune-out"))
    at.add_argument("--resume", action="store_true", help="continue from the step-2 checkpoint")

    lk = sub.add_parser("lookup", help="print the tuned nb and ib for a problem")
    lk.add_argument("table", type=Path)
    lk.add_argument("n", type=_positive)
    lk.add_argument("ncores", type=_positive)

    fz = sub.add_parser("factorize", help="factor a matrix with the tuned parameters")
    fz.add_argument("table", type=Path)
    fz.add_argument("n", type=_positive)
    fz.add_argument("ncores", type=_positive)
    fz.add_argument("--matrix", type=Path, help="binary (.bin) or .csv matrix; random if omitted")
    fz.add_argument("--seed", type=int, default=0)

    rp = sub.add_parser("report", help="emit CSV reports")
    rsub = rp.add_subparsers(dest="kind", required=True)
    ratio = rsub.add_parser("ratio", help="candidate rates as a percentage of a reference")
    ratio.add_argument("reference", type=Path)
    ratio.add_argument("candidate", type=Path)
    sel = rsub.add_parser("selection", help="kernel samples with pruning marks")
    sel.add_argument("kernels", type=Path)
    sel.add_argument("candidates", type=Path)
    cur = rsub.add_parser("curves", help="rate versus n per (ncores, nb, ib)")
    cur.add_argument("sweep", type=Path)
    for p in (ratio, sel, cur):
        p.add_argument("-o", "--output", type=Path)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "autotune":
            config = RunConfig(
                backend=args.backend,
                heuristic=args.heuristic,
                payg=args.payg,
                nb_max=args.nb_max,
                reps_kernel=args.reps_kernel,
                reps_factor=args.reps_factor,
                max_cores=args.max_cores,
                n_values=args.n_values,
                strategy=args.strategy,
                cap=args.cap,
                out_dir=args.out_dir,
                machine=args.machine,
                resume=args.resume,
            )
            return cmd_autotune(config)
        if args.command == "lookup":
            return cmd_lookup(args.table, args.n, args.ncores)
        if args.command == "factorize":
            return cmd_factorize(args.table, args.n, args.ncores, args.matrix, args.seed)
        if args.kind == "ratio":
            inputs = [args.reference, args.candidate]
        elif args.kind == "selection":
            inputs = [args.kernels, args.candidates]
        else:
            inputs = [args.sweep]
        return cmd_report(args.kind, inputs, args.output)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"tiletune: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
