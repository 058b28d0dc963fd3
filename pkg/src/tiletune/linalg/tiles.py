"""Tile storage and small-matrix I/O."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class TileMatrix:
    """Square matrix stored as ``nt x nt`` contiguous column-major tiles.

    ``n`` is the logical order; when ``nb`` does not divide it the matrix is
    padded with an identity block up to ``nt * nb``.
    """

    n: int
    nb: int
    tiles: list[list[np.ndarray]]

    @property
    def nt(self) -> int:
        return len(self.tiles)

    @property
    def padded_order(self) -> int:
        return self.nt * self.nb

    @classmethod
    def from_dense(cls, a, nb: int) -> TileMatrix:
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if nb < 1:
            raise ValueError(f"nb must be positive, got {nb}")
        n = a.shape[0]
        nt = -(-n // nb)
        full = np.eye(nt * nb)
        full[:n, :n] = a
        tiles = [
            [
                np.array(full[i * nb : (i + 1) * nb, j * nb : (j + 1) * nb], order="F")
                for j in range(nt)
            ]
            for i in range(nt)
        ]
        return cls(n=n, nb=nb, tiles=tiles)

    def to_dense(self, trim: bool = True) -> np.ndarray:
        full = np.block(self.tiles) if self.nt else np.zeros((0, 0))
        return full[: self.n, : self.n].copy() if trim else full

    def copy(self) -> TileMatrix:
        return TileMatrix(
            n=self.n, nb=self.nb, tiles=[[t.copy(order="F") for t in row] for row in self.tiles]
        )


_HEADER = struct.Struct("<2d")


def write_matrix(path, a) -> None:
    """Write ``a`` as ``.csv`` text or as flat little-endian float64 binary.

    The binary layout is a header row ``(n, nb)`` followed by the ``n*n``
    entries in row-major order.  ``a`` may be a dense array or a TileMatrix.
    """
    path = Path(path)
    if isinstance(a, TileMatrix):
        nb, a = a.nb, a.to_dense()
    else:
        a = np.asarray(a, dtype=np.float64)
        nb = a.shape[0]
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            for row in a:
                writer.writerow([repr(float(x)) for x in row])
        return
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(float(a.shape[0]), float(nb)))
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_matrix(path) -> tuple[np.ndarray, int | None]:
    """Read a matrix written by :func:`write_matrix`; returns ``(a, nb)``.

    ``nb`` is ``None`` for CSV input.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="") as fh:
            rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
        a = np.array(rows, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"{path}: matrix is not square")
        return a, None
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    n_f, nb_f = _HEADER.unpack_from(raw)
    n, nb = int(n_f), int(nb_f)
    if n != n_f or nb != nb_f or n < 0 or nb < 1:
        raise ValueError(f"{path}: malformed header ({n_f}, {nb_f})")
    body = raw[_HEADER.size :]
    if len(body) != 8 * n * n:
        raise ValueError(f"{path}: expected {n * n} entries, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(n, n).astype(np.float64), nb
