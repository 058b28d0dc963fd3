"""Tunable parameters and performance normalization shared by every stage."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class TuneParams:
    """An (NB, IB) pair: tile order and inner blocking size."""

    nb: int
    ib: int

    def __post_init__(self) -> None:
        if not (isinstance(self.nb, int) and isinstance(self.ib, int)):
            raise TypeError("nb and ib must be integers")
        if not 1 <= self.ib <= self.nb:
            raise ValueError(f"need 1 <= ib <= nb, got nb={self.nb}, ib={self.ib}")

    @property
    def divides(self) -> bool:
        return self.nb % self.ib == 0

    def __str__(self) -> str:
        return f"{self.nb}-{self.ib}"


def qr_flops(n: int) -> float:
    """Nominal flop count of a square QR factorization, without extra-flops."""
    return 4.0 / 3.0 * float(n) ** 3


def perf_normalize(n: int, elapsed: float) -> float:
    """Gflop/s of an order-``n`` QR that took ``elapsed`` seconds."""
    if elapsed <= 0:
        raise ValueError(f"elapsed must be positive, got {elapsed!r}")
    return qr_flops(n) / elapsed / 1e9


def ssrfb_flops(nb: int) -> float:
    # nominal: NT^3/3 calls at 4 nb^3 each sum to 4/3 N^3
    return 4.0 * float(nb) ** 3


def kernel_gflops(nb: int, reps: int, elapsed_total: float) -> float:
    """Rate of ``reps`` batched ssrfb calls at the nominal 4*nb^3 flops each."""
    if elapsed_total <= 0:
        raise ValueError(f"elapsed_total must be positive, got {elapsed_total!r}")
    return reps * ssrfb_flops(nb) / elapsed_total / 1e9


@dataclass(frozen=True)
class PerfSample:
    elapsed: float
    gflops: float

    @classmethod
    def from_elapsed(cls, n: int, elapsed: float) -> PerfSample:
        return cls(elapsed=elapsed, gflops=perf_normalize(n, elapsed))
