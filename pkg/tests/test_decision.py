import json
import random
from pathlib import Path

import pytest

from tiletune import TuneParams
from tiletune.backend import SyntheticBackend
from tiletune.decision import (
    TableFormatError,
    TuningTable,
    build_table,
    ingest_results_csv,
    load_table,
    lookup,
    lookup_point,
    parse_results_csv,
    relative_report,
    save_table,
)
from tiletune.sweep import BestEntry, Grid, SweepResult, plan_grid, run_step2

P = TuneParams
ISTANBUL = Path(__file__).parent / "fixtures" / "istanbul"


def table_on(grid, pick=lambda n, c: P(8 * (1 + n % 7), 4)):
    entries = {(n, c): BestEntry(pick(n, c), float(n * c)) for n, c in grid.points()}
    return TuningTable(grid=grid, entries=entries, heuristic=2, payg=True, backend="synthetic:1", machine="m")


def test_single_entry_table():
    grid = Grid((64,), (1,))
    res = run_step2(SyntheticBackend(1), [P(16, 4)], grid)
    table = build_table(res, heuristic=2, backend="synthetic:1")
    assert table.entries == {(64, 1): res.best[(64, 1)]}
    assert lookup(table, 5000, 17) == P(16, 4)
    assert table.payg is True and table.heuristic == 2


def test_build_table_incomplete_coverage():
    res = SweepResult(samples=[], best={(64, 1): BestEntry(P(8, 4), 1.0)})
    with pytest.raises(ValueError):
        build_table(res, grid=Grid((64, 128), (1,)))
    with pytest.raises(ValueError):
        build_table(res)


def test_lookup_worked_example_and_ties():
    table = table_on(plan_grid(48))
    assert lookup_point(table, 1800, 5) == (2000, 4)
    assert lookup_point(table, 1500, 3) == (2000, 4)
    assert lookup_point(table, 1, 1000) == (500, 48)
    for n, c in table.grid.points():
        assert lookup(table, n, c) == table.entries[(n, c)].params
    with pytest.raises(ValueError):
        lookup(table, 0, 1)


def test_lookup_piecewise_constant():
    table = table_on(plan_grid(48))
    ns = table.grid.n_values
    rng = random.Random(0)
    for _ in range(1000):
        i = rng.randrange(len(ns))
        gaps = [abs(ns[j] - ns[i]) for j in (i - 1, i + 1) if 0 <= j < len(ns)]
        delta = rng.randrange(-(min(gaps) // 2) + 1, min(gaps) // 2)
        c = rng.randrange(1, 60)
        assert lookup(table, ns[i] + delta, c) == lookup(table, ns[i], c)


def test_save_load_round_trip(tmp_path):
    table = table_on(Grid((100, 200), (1, 2)))
    path = save_table(table, tmp_path / "t.json")
    text = Path(path).read_text()
    back = load_table(path)
    assert back == table
    assert back.to_json() == text


def test_load_errors(tmp_path):
    table = table_on(Grid((100, 200), (1, 2)))
    path = tmp_path / "t.json"
    save_table(table, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(TableFormatError, match="malformed"):
        load_table(path)
    doc = json.loads(text)
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(TableFormatError, match="format_version 99"):
        load_table(path)
    doc["format_version"] = 1
    del doc["entries"][0]
    path.write_text(json.dumps(doc))
    with pytest.raises(TableFormatError):
        load_table(path)


def test_ingest_es_rows():
    res = ingest_results_csv(ISTANBUL / "es.csv")
    assert res.best[(2000, 4)] == BestEntry(P(168, 28), 24.81)
    assert res.best[(6000, 48)] == BestEntry(P(168, 28), 272.55)
    assert res.grid == Grid((2000, 2700, 4200, 6000), (4, 7, 40, 48))
    assert lookup(build_table(res), 2000, 4) == P(168, 28)


def test_ingest_errors(tmp_path):
    with pytest.raises(ValueError):
        parse_results_csv("")
    with pytest.raises(ValueError, match="x.csv:3"):
        parse_results_csv("n,ncores,gflops,nb,ib\n1,1,1.0,4,2\n2,1,1.0\n", "x.csv")
    with pytest.raises(ValueError, match=":2"):
        parse_results_csv("n,ncores,gflops,nb,ib\n1,1,abc,4,2\n")
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(ValueError):
        ingest_results_csv(empty)


def test_ingest_lenient_whitespace():
    res = parse_results_csv("# c\n n , ncores ,gflops,nb,ib\n 100 , 2 , 3.5 , 8 , 4 \n")
    assert res.best[(100, 2)] == BestEntry(P(8, 4), 3.5)


def test_relative_report_self_and_half():
    es = ingest_results_csv(ISTANBUL / "es.csv")
    rep = relative_report(es, es)
    assert rep.average == 100.0 and rep.optimum_count == rep.total == 16

    ref = {(1, 1): BestEntry(P(4, 2), 10.0), (2, 1): BestEntry(P(4, 2), 10.0)}
    cand = {(1, 1): BestEntry(P(4, 2), 10.0), (2, 1): BestEntry(P(8, 2), 5.0)}
    rep = relative_report(ref, cand)
    assert rep.average == pytest.approx(75.0)
    assert rep.optimum_count == 1
    assert "75.00%" in rep.summary()


def test_relative_report_grid_mismatch():
    a = {(1, 1): BestEntry(P(4, 2), 1.0)}
    b = {(2, 1): BestEntry(P(4, 2), 1.0)}
    with pytest.raises(ValueError, match="grids differ"):
        relative_report(a, b)


@pytest.mark.parametrize(
    "name, avg, optimum",
    [
        ("h0_ps", 97.172, 7),
        ("h1_ps", 94.121, 2),
        ("h2_ps", 97.226, 7),
        ("h2_pspayg", 97.097, 7),
    ],
)
def test_istanbul_fixture_ratios(name, avg, optimum):
    es = ingest_results_csv(ISTANBUL / "es.csv")
    rep = relative_report(es, ingest_results_csv(ISTANBUL / f"{name}.csv"))
    assert rep.average == pytest.approx(avg, abs=5e-4)
    assert rep.optimum_count == optimum and rep.total == 16


def test_report_csv():
    es = ingest_results_csv(ISTANBUL / "es.csv")
    text = relative_report(es, ingest_results_csv(ISTANBUL / "h2_pspayg.csv")).to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("n,ncores,ref_nb")
    assert len(lines) == 17
