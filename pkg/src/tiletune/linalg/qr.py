"""Tile QR factorization statically scheduled over a pool of worker threads."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from ..params import PerfSample, TuneParams
from .kernels import _geqrt, _larfb, _ssrfb, _tsqrt
from .tiles import TileMatrix


@dataclass
class QrFactors:
    """Output of :func:`tile_qr`.

    ``tiles`` holds R in the upper triangle of the diagonal and
    super-diagonal tiles, the unit lower reflectors strictly below the
    diagonal of each diagonal tile and a full reflector block in each
    sub-diagonal tile.  ``t[i][k]`` is the T block paired with tile
    ``(i, k)``, ``i >= k``.
    """

    tiles: TileMatrix
    t: list[list[np.ndarray | None]]
    ib: int

    @property
    def n(self) -> int:
        return self.tiles.n

    @property
    def nb(self) -> int:
        return self.tiles.nb

    @property
    def r(self) -> TileMatrix:
        nt, nb = self.tiles.nt, self.nb
        zero = np.zeros((nb, nb), order="F")
        rows = []
        for i in range(nt):
            row = []
            for j in range(nt):
                if j > i:
                    row.append(self.tiles.tiles[i][j].copy(order="F"))
                elif j == i:
                    row.append(np.triu(self.tiles.tiles[i][i]).copy(order="F"))
                else:
                    row.append(zero.copy(order="F"))
            rows.append(row)
        return TileMatrix(n=self.n, nb=nb, tiles=rows)

    @property
    def v(self) -> TileMatrix:
        nt, nb = self.tiles.nt, self.nb
        rows = []
        for i in range(nt):
            row = []
            for j in range(nt):
                if j < i:
                    row.append(self.tiles.tiles[i][j].copy(order="F"))
                elif j == i:
                    v = np.tril(self.tiles.tiles[i][i], -1)
                    v[np.arange(nb), np.arange(nb)] = 1.0
                    row.append(np.asfortranarray(v))
                else:
                    row.append(np.zeros((nb, nb), order="F"))
            rows.append(row)
        return TileMatrix(n=self.n, nb=nb, tiles=rows)

    def r_dense(self, trim: bool = True) -> np.ndarray:
        return self.r.to_dense(trim)

    def apply_q(self, x, trans: bool = False) -> np.ndarray:
        """Return ``Q x`` (or ``Q^T x``) for ``x`` with ``nt*nb`` rows."""
        nt, nb = self.tiles.nt, self.nb
        x = np.array(x, dtype=np.float64, copy=True)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[:, None]
        if x.shape[0] != nt * nb:
            raise ValueError(f"expected {nt * nb} rows, got {x.shape[0]}")
        rows = [x[i * nb : (i + 1) * nb] for i in range(nt)]
        a, t = self.tiles.tiles, self.t
        if trans:
            for k in range(nt):
                _larfb(a[k][k], t[k][k], rows[k], trans=True)
                for i in range(k + 1, nt):
                    _ssrfb(a[i][k], t[i][k], rows[k], rows[i], trans=True)
        else:
            for k in reversed(range(nt)):
                for i in reversed(range(k + 1, nt)):
                    _ssrfb(a[i][k], t[i][k], rows[k], rows[i], trans=False)
                _larfb(a[k][k], t[k][k], rows[k], trans=False)
        return x[:, 0] if squeeze else x

    def q_dense(self, trim: bool = True) -> np.ndarray:
        q = self.apply_q(np.eye(self.tiles.padded_order))
        return q[: self.n, : self.n] if trim else q


class _Progress:
    """Per-panel progress table shared by the workers.

    ``done[k]`` is the last tile row of panel ``k`` whose reflectors are
    available (``-1`` before geqrt, ``k`` after it, ``i`` after tsqrt on
    row ``i``).
    """

    def __init__(self, nt: int):
        self.done = [-1] * nt
        self.cond = threading.Condition()
        self.failed = False

    def publish(self, k: int, i: int) -> None:
        with self.cond:
            self.done[k] = i
            self.cond.notify_all()

    def wait(self, k: int, i: int) -> None:
        with self.cond:
            while self.done[k] < i and not self.failed:
                self.cond.wait()
            if self.failed:
                raise _Aborted

    def abort(self) -> None:
        with self.cond:
            self.failed = True
            self.cond.notify_all()


class _Aborted(Exception):
    pass


def _worker(rank, ncores, a, t, ib, progress, errors):
    nt = len(a)
    try:
        for k in range(nt):
            for j in range(k + _first_owned(k, rank, ncores), nt, ncores):
                if j == k:
                    if t[k][k] is None:
                        t[k][k] = np.zeros((ib, a[k][k].shape[0]), order="F")
                    _geqrt(a[k][k], t[k][k], ib)
                    progress.publish(k, k)
                    for i in range(k + 1, nt):
                        t[i][k] = np.zeros_like(t[k][k])
                        _tsqrt(a[k][k], a[i][k], t[i][k], ib)
                        progress.publish(k, i)
                else:
                    progress.wait(k, k)
                    _larfb(a[k][k], t[k][k], a[k][j])
                    for i in range(k + 1, nt):
                        progress.wait(k, i)
                        _ssrfb(a[i][k], t[i][k], a[k][j], a[i][j])
    except _Aborted:
        return
    except BaseException as exc:  # noqa: BLE001 - re-raised by the caller
        errors.append(exc)
        progress.abort()


def _first_owned(k: int, rank: int, ncores: int) -> int:
    """Offset from ``k`` to the first tile column ``>= k`` owned by ``rank``."""
    return (rank - k) % ncores


def tile_qr(a, params: TuneParams, ncores: int = 1) -> tuple[QrFactors, PerfSample]:
    """Factor a copy of ``a`` (a TileMatrix or a dense square array).

    Tile columns are dealt cyclically to ``ncores`` workers; every tile sees
    the same sequence of kernel calls whatever ``ncores`` is, so the result
    is bitwise reproducible across worker counts.
    """
    if ncores < 1:
        raise ValueError(f"ncores must be >= 1, got {ncores}")
    if isinstance(a, TileMatrix):
        if a.nb != params.nb:
            raise ValueError(f"matrix tiled with nb={a.nb}, params ask for nb={params.nb}")
        work = a.copy()
    else:
        work = TileMatrix.from_dense(a, params.nb)
    for row in work.tiles:
        for tile in row:
            if not np.isfinite(tile).all():
                raise ValueError("non-finite input")

    nt = work.nt
    t: list[list[np.ndarray | None]] = [[None] * nt for _ in range(nt)]
    progress = _Progress(nt)
    errors: list[BaseException] = []
    ib = params.ib

    start = time.perf_counter()
    if ncores == 1:
        _worker(0, 1, work.tiles, t, ib, progress, errors)
    else:
        threads = [
            threading.Thread(
                target=_worker,
                args=(rank, ncores, work.tiles, t, ib, progress, errors),
                name=f"tile-qr-{rank}",
            )
            for rank in range(ncores)
        ]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    elapsed = time.perf_counter() - start
    if errors:
        raise errors[0]

    return QrFactors(tiles=work, t=t, ib=ib), PerfSample.from_elapsed(work.n, elapsed)


def check_factorization(a_original, factors: QrFactors) -> tuple[float, float]:
    """Return ``(||A - QR||_F / ||A||_F, ||Q^T Q - I||_F)`` on the unpadded block."""
    if isinstance(a_original, TileMatrix):
        a_original = a_original.to_dense()
    a = np.asarray(a_original, dtype=np.float64)
    n = factors.n
    if a.shape != (n, n):
        raise ValueError(f"shape mismatch: matrix {a.shape}, factors of order {n}")
    q = factors.q_dense()
    r = factors.r_dense()
    norm_a = np.linalg.norm(a)
    residual = float(np.linalg.norm(a - q @ r) / (norm_a if norm_a > 0 else 1.0))
    orthogonality = float(np.linalg.norm(q.T @ q - np.eye(n)))
    return residual, orthogonality
