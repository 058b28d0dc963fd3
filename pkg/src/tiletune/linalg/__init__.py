"""Self-contained tile QR factorization engine."""

from .kernels import geqrt, larfb, ssrfb, tsqrt
from .qr import QrFactors, check_factorization, tile_qr
from .tiles import TileMatrix, read_matrix, write_matrix

__all__ = [
    "QrFactors",
    "TileMatrix",
    "check_factorization",
    "geqrt",
    "larfb",
    "read_matrix",
    "ssrfb",
    "tile_qr",
    "tsqrt",
    "write_matrix",
]
