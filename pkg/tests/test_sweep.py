import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiletune import TuneParams, perf_normalize
from tiletune.backend import MeasuredBackend, SyntheticBackend
from tiletune.kernelbench import sweep_kernel
from tiletune.preselect import preselect
from tiletune.sweep import (
    Grid,
    SweepError,
    SweepResult,
    compute_best,
    find_dominated,
    payg_prune,
    plan_grid,
    run_point,
    run_step2,
)

P = TuneParams


class FakeTimes:
    tag = "fake"

    def __init__(self, times):
        self.times = times

    def factor_times(self, n, ncores, params, reps):
        return list(self.times)


class Counting:
    """Wraps a backend and records every run."""

    def __init__(self, inner):
        self.inner = inner
        self.tag = inner.tag
        self.calls = []

    def factor_times(self, n, ncores, params, reps):
        self.calls.append((n, ncores, params))
        return self.inner.factor_times(n, ncores, params, reps)


def candidates_for(seed, nb_max=512, heuristic=2):
    return preselect(sweep_kernel(SyntheticBackend(seed), nb_max=nb_max), heuristic)


@pytest.mark.parametrize(
    "max_cores, cores",
    [(16, (1, 2, 4, 8, 16)), (48, (1, 2, 4, 8, 16, 32, 48)), (1, (1,))],
)
def test_plan_grid(max_cores, cores):
    assert plan_grid(max_cores).core_values == cores
    assert plan_grid(max_cores).n_values == (500, 1000, 2000, 4000, 6000, 8000, 10000)


def test_plan_grid_errors():
    with pytest.raises(ValueError):
        plan_grid(0)
    with pytest.raises(ValueError):
        Grid((2, 1), (1,))


def test_run_point_synthetic_is_model_value():
    b = SyntheticBackend(4)
    s = run_point(b, 1000, 4, P(100, 20))
    assert s.gflops == b.factor_rate(1000, 4, P(100, 20))
    assert s.reps == 6


def test_run_point_median_ignores_outlier():
    s = run_point(FakeTimes([10, 11, 9, 50, 10, 11]), 1000, 1, P(100, 10))
    assert s.gflops == perf_normalize(1000, 10.5)


def test_run_point_errors():
    with pytest.raises(ValueError, match="tile larger"):
        run_point(SyntheticBackend(1), 500, 1, P(504, 8))
    with pytest.raises(SweepError):
        run_point(FakeTimes([1.0]), 100, 1, P(10, 10), reps=6)


def test_run_point_measured():
    s = run_point(MeasuredBackend(), 32, 2, P(8, 4), reps=2)
    assert s.gflops > 0


def test_payg_prune_example():
    results = [(P(96, 8), 10.0), (P(168, 8), 12.0), (P(300, 10), 9.0)]
    cands = [p for p, _ in results]
    assert payg_prune(cands, results) == [P(168, 8), P(300, 10)]


def test_payg_prune_strict_and_missing():
    results = [(P(8, 1), 5.0), (P(16, 1), 5.0), (P(32, 1), 5.0)]
    cands = [p for p, _ in results]
    assert payg_prune(cands, results) == cands
    with pytest.raises(SweepError):
        payg_prune(cands, results[:2])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 64), st.integers(0, 8)), min_size=1, max_size=10, unique_by=lambda t: t[0]))
def test_payg_prune_order_independent(rows):
    results = [(P(nb, 1), float(g)) for nb, g in rows]
    cands = [p for p, _ in results]
    keep = set(payg_prune(cands, results))
    assert keep == set(payg_prune(cands[::-1], results[::-1]))
    for p, g in results:
        beaten = any(q.nb > p.nb and h > g for q, h in results)
        assert (p not in keep) == beaten


def test_find_dominated_cites_fastest():
    dom = find_dominated([(P(8, 1), 1.0), (P(16, 1), 3.0), (P(32, 1), 2.0)])
    assert dom == {P(8, 1): (P(16, 1), 3.0)}


def test_ps_counts_every_run():
    cands = candidates_for(3, nb_max=128)
    grid = Grid((128, 256, 512), (1, 2, 4))
    res = run_step2(SyntheticBackend(3), cands, grid, payg=False)
    assert res.run_count == len(cands) * len(grid)
    assert res.pruning_log == []
    assert set(res.best) == set(grid.points())


def test_pspayg_fewer_runs_same_winners_istanbul_grid():
    cands = candidates_for(7)
    assert len(cands) == 8
    grid = plan_grid(48)
    ps = run_step2(SyntheticBackend(7), cands, grid, payg=False)
    pg = run_step2(SyntheticBackend(7), cands, grid, payg=True)
    assert pg.run_count < ps.run_count
    assert pg.best == ps.best
    ns = [d.n for d in pg.pruning_log]
    assert ns and ns == sorted(ns)


@pytest.mark.parametrize("seed", range(10))
def test_pspayg_no_loss(seed):
    cands = candidates_for(seed, nb_max=256)
    grid = Grid((256, 512, 1000, 2000, 4000), (1, 2, 4, 8))
    ps = run_step2(SyntheticBackend(seed), cands, grid, payg=False)
    pg = run_step2(SyntheticBackend(seed), cands, grid, payg=True)
    assert pg.best == ps.best
    assert pg.run_count <= ps.run_count
    assert (pg.run_count < ps.run_count) == bool(pg.pruning_log)


def test_single_candidate_modes_agree():
    grid = Grid((64, 128), (1, 2))
    a = run_step2(SyntheticBackend(1), [P(16, 4)], grid, payg=False)
    b = run_step2(SyntheticBackend(1), [P(16, 4)], grid, payg=True)
    assert a.best == b.best and a.run_count == b.run_count == 4


def test_increasing_n_order_and_skip_large_tiles():
    b = Counting(SyntheticBackend(2))
    grid = Grid((64, 256), (1,))
    res = run_step2(b, [P(32, 8), P(128, 16)], grid, payg=False)
    assert [n for n, _, _ in b.calls] == [64, 256, 256]
    assert res.best[(64, 1)].params == P(32, 8)


def test_no_runnable_candidate():
    with pytest.raises(SweepError):
        run_step2(SyntheticBackend(1), [P(128, 16)], Grid((64,), (1,)))
    with pytest.raises(SweepError):
        run_step2(SyntheticBackend(1), [], Grid((64,), (1,)))


def test_best_map_idempotent_and_round_trip():
    res = run_step2(SyntheticBackend(5), candidates_for(5, 128), Grid((128, 512), (1, 4)))
    assert compute_best(res.samples) == res.best
    back = SweepResult.from_json(res.to_json())
    assert back.to_json() == res.to_json()
    assert back.best == res.best
    assert res.to_csv().splitlines()[0] == "n,ncores,nb,ib,gflops,reps"


class Interrupt(Exception):
    pass


class FailAt(Counting):
    def __init__(self, inner, fail_n):
        super().__init__(inner)
        self.fail_n = fail_n

    def factor_times(self, n, ncores, params, reps):
        if n == self.fail_n:
            raise Interrupt
        return super().factor_times(n, ncores, params, reps)


def test_checkpoint_resume(tmp_path):
    ckpt = tmp_path / "ck.json"
    cands = candidates_for(6, 128)
    grid = Grid((128, 256, 512), (1, 2))
    full = run_step2(SyntheticBackend(6), cands, grid, checkpoint=ckpt)

    ckpt.unlink()
    with pytest.raises(Interrupt):
        run_step2(FailAt(SyntheticBackend(6), 512), cands, grid, checkpoint=ckpt)
    assert json.loads(ckpt.read_text())["completed_n"] == [128, 256]

    counting = Counting(SyntheticBackend(6))
    resumed = run_step2(counting, cands, grid, checkpoint=ckpt, resume=True)
    assert {n for n, _, _ in counting.calls} == {512}
    assert resumed.to_json() == full.to_json()


def test_checkpoint_for_other_run_rejected(tmp_path):
    ckpt = tmp_path / "ck.json"
    grid = Grid((64,), (1,))
    run_step2(SyntheticBackend(1), [P(16, 4)], grid, checkpoint=ckpt)
    with pytest.raises(SweepError, match="different run"):
        run_step2(SyntheticBackend(2), [P(16, 4)], grid, checkpoint=ckpt, resume=True)
