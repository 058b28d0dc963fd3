import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiletune import PerfSample, TuneParams, perf_normalize
from tiletune.linalg import TileMatrix, check_factorization, read_matrix, tile_qr, write_matrix
from tiletune.params import kernel_gflops, qr_flops

from .oracles import EPS, householder_qr


def test_small_matches_dense_oracle():
    a = np.random.default_rng(0).standard_normal((8, 8))
    factors, _ = tile_qr(a, TuneParams(4, 2), 1)
    residual, _ = check_factorization(a, factors)
    assert residual <= 1e-12
    _, r_oracle = householder_qr(a)
    # the flat TS tree can pick different row signs; |R| is convention free
    assert np.allclose(np.abs(factors.r_dense()), np.abs(r_oracle), atol=1e-12)


def test_bitwise_identical_across_cores():
    a = np.random.default_rng(1).standard_normal((8, 8))
    r1 = tile_qr(a, TuneParams(4, 2), 1)[0].r_dense()
    r2 = tile_qr(a, TuneParams(4, 2), 2)[0].r_dense()
    assert r1.tobytes() == r2.tobytes()


def test_perf_formula():
    assert math.isclose(perf_normalize(1000, 0.5), 4 / 3 * 1e9 / 0.5 / 1e9)
    assert round(perf_normalize(1000, 0.5), 3) == 2.667


def test_kernel_rate_formula():
    assert math.isclose(kernel_gflops(60, 1, 1e-3), 0.864)
    assert math.isclose(kernel_gflops(60, 50, 0.05), 0.864)


@given(n=st.integers(1, 20000), elapsed=st.floats(1e-6, 1e4))
def test_perf_sample_definition(n, elapsed):
    s = PerfSample.from_elapsed(n, elapsed)
    assert math.isclose(s.gflops * s.elapsed * 1e9, qr_flops(n), rel_tol=4 * EPS)


def test_identity_factors():
    n = 12
    factors, _ = tile_qr(np.eye(n), TuneParams(4, 2), 2)
    residual, orth = check_factorization(np.eye(n), factors)
    assert residual == 0.0
    assert orth <= n * EPS


def test_random_64():
    a = np.random.default_rng(2).standard_normal((64, 64))
    factors, perf = tile_qr(a, TuneParams(16, 4), 2)
    residual, orth = check_factorization(a, factors)
    assert residual <= 1e-12
    assert orth <= 50 * 64 * EPS
    assert perf.elapsed > 0


def test_corrupted_r_detected():
    a = np.random.default_rng(3).standard_normal((16, 16))
    factors, _ = tile_qr(a, TuneParams(8, 4), 1)
    factors.tiles.tiles[0][1][2, 3] = 0.0
    residual, _ = check_factorization(a, factors)
    assert residual > 1e-6


def test_r_is_upper_triangular():
    a = np.random.default_rng(4).standard_normal((24, 24))
    factors, _ = tile_qr(a, TuneParams(8, 2), 3)
    r = factors.r_dense()
    assert not np.tril(r, -1).any()


def test_padding_for_non_dividing_order():
    a = np.random.default_rng(5).standard_normal((10, 10))
    factors, _ = tile_qr(a, TuneParams(4, 2), 2)
    assert factors.tiles.nt == 3
    residual, orth = check_factorization(a, factors)
    assert residual <= 50 * 10 * EPS
    assert orth <= 50 * 10 * EPS


def test_input_not_modified():
    a = np.random.default_rng(6).standard_normal((8, 8))
    tiles = TileMatrix.from_dense(a, 4)
    before = tiles.to_dense()
    tile_qr(tiles, TuneParams(4, 2), 2)
    assert np.array_equal(tiles.to_dense(), before)


def test_errors():
    with pytest.raises(ValueError):
        tile_qr(np.eye(4), TuneParams(2, 1), 0)
    bad = np.eye(4)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        tile_qr(bad, TuneParams(2, 1), 1)
    with pytest.raises(ValueError):
        tile_qr(TileMatrix.from_dense(np.eye(4), 2), TuneParams(4, 1), 1)
    factors, _ = tile_qr(np.eye(4), TuneParams(2, 1), 1)
    with pytest.raises(ValueError):
        check_factorization(np.eye(5), factors)


def test_more_workers_than_tile_columns():
    a = np.random.default_rng(7).standard_normal((8, 8))
    r1 = tile_qr(a, TuneParams(4, 4), 1)[0].r_dense()
    r8 = tile_qr(a, TuneParams(4, 4), 8)[0].r_dense()
    assert np.array_equal(r1, r8)


def test_no_threads_left_behind():
    before = threading.active_count()
    tile_qr(np.random.default_rng(8).standard_normal((16, 16)), TuneParams(4, 2), 4)
    assert threading.active_count() == before


def test_tile_matrix_layout():
    a = np.arange(36, dtype=float).reshape(6, 6)
    tm = TileMatrix.from_dense(a, 4)
    assert (tm.nt, tm.padded_order) == (2, 8)
    for row in tm.tiles:
        for tile in row:
            assert tile.shape == (4, 4) and tile.flags.f_contiguous
    assert np.array_equal(tm.to_dense(), a)
    full = tm.to_dense(trim=False)
    assert np.array_equal(full[6:, 6:], np.eye(2))


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(2, 40),
    nb=st.integers(1, 12),
    ib_frac=st.integers(1, 12),
    ncores=st.sampled_from([1, 2, 4]),
    seed=st.integers(0, 2**32 - 1),
)
def test_residual_bound_property(n, nb, ib_frac, ncores, seed):
    nb = min(nb, n)
    divisors = [d for d in range(1, nb + 1) if nb % d == 0]
    ib = divisors[ib_frac % len(divisors)]
    a = np.random.default_rng(seed).standard_normal((n, n))
    factors, _ = tile_qr(a, TuneParams(nb, ib), ncores)
    residual, orth = check_factorization(a, factors)
    assert residual <= 50 * n * EPS
    assert orth <= 50 * n * EPS


@pytest.mark.parametrize("suffix", [".bin", ".csv"])
def test_matrix_io_round_trip(tmp_path, suffix):
    a = np.random.default_rng(9).standard_normal((5, 5))
    path = tmp_path / f"m{suffix}"
    write_matrix(path, TileMatrix.from_dense(a, 2))
    back, nb = read_matrix(path)
    assert np.array_equal(back, a)
    assert nb == (2 if suffix == ".bin" else None)


def test_binary_layout(tmp_path):
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    path = tmp_path / "m.bin"
    write_matrix(path, a)
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    assert raw.tolist() == [2.0, 2.0, 1.0, 2.0, 3.0, 4.0]


def test_truncated_binary(tmp_path):
    path = tmp_path / "m.bin"
    write_matrix(path, np.eye(3))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_matrix(path)
