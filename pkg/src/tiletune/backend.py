"""Measurement backends: real wall-clock timing or a deterministic rate model."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .kernelbench import NO_FLUSH, prepare_workload, time_batched
from .linalg import check_factorization, tile_qr
from .params import TuneParams, perf_normalize, qr_flops, ssrfb_flops

ENV_VAR = "TILETUNE_BACKEND"

EPS = float(np.finfo(np.float64).eps)


class NumericalError(RuntimeError):
    pass


class MeasuredBackend:
    """Times real kernel calls and real factorizations on this machine."""

    tag = "measured"
    measured = True

    def __init__(self, seed: int = 0):
        self.seed = seed

    def kernel_elapsed(self, params: TuneParams, reps: int, strategy: str = NO_FLUSH) -> float:
        workload = prepare_workload(params, reps, strategy, seed=self.seed)
        return time_batched(workload, reps)

    def factor_times(self, n: int, ncores: int, params: TuneParams, reps: int) -> list[float]:
        a = np.random.default_rng(self.seed + n).standard_normal((n, n))
        times = []
        for rep in range(reps):
            factors, perf = tile_qr(a, params, ncores)
            if rep == 0:
                residual, _ = check_factorization(a, factors)
                if not residual <= 50 * n * EPS:
                    raise NumericalError(
                        f"numerically invalid run: residual {residual:.3e} at n={n}, {params}"
                    )
            times.append(perf.elapsed)
        return times


@dataclass(frozen=True)
class SyntheticModel:
    """Parameters of the analytic rate model.

    Kernel rate (Gflop/s) for one core::

        peak * nb^2 / (nb^2 + half^2) * (1 - ib_penalty * |ib/nb - ib_sweet|)

    and a factorization on ``ncores`` runs at::

        ncores * kernel_rate * min(1, (n/nb)^2 / (spread * ncores))

    The second factor only grows with ``n`` and saturates sooner for smaller
    tiles, so a larger tile that wins at some ``n`` keeps winning at every
    larger ``n``.
    """

    peak: float
    half: float
    ib_penalty: float
    ib_sweet: float
    spread: float

    @classmethod
    def from_seed(cls, seed: int) -> SyntheticModel:
        rng = np.random.default_rng([0x7117E, seed])
        return cls(
            peak=float(rng.uniform(4.0, 12.0)),
            half=float(rng.uniform(8.0, 24.0)),
            ib_penalty=float(rng.uniform(0.1, 0.5)),
            ib_sweet=float(rng.uniform(0.1, 0.6)),
            spread=float(rng.uniform(1.0, 4.0)),
        )


class SyntheticBackend:
    """Deterministic stand-in for a machine; a pure function of its seed."""

    measured = False

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.model = SyntheticModel.from_seed(self.seed)

    @property
    def tag(self) -> str:
        return f"synthetic:{self.seed}"

    def kernel_rate(self, params: TuneParams) -> float:
        m = self.model
        nb2 = float(params.nb) ** 2
        shape = nb2 / (nb2 + m.half**2)
        return m.peak * shape * (1.0 - m.ib_penalty * abs(params.ib / params.nb - m.ib_sweet))

    def kernel_time(self, params: TuneParams) -> float:
        """Model seconds for one ssrfb call."""
        return ssrfb_flops(params.nb) / (self.kernel_rate(params) * 1e9)

    def kernel_elapsed(self, params: TuneParams, reps: int, strategy: str = NO_FLUSH) -> float:
        return reps * self.kernel_time(params)

    def efficiency(self, n: int, ncores: int, nb: int) -> float:
        return min(1.0, (n / nb) ** 2 / (self.model.spread * ncores))

    def factor_time(self, n: int, ncores: int, params: TuneParams) -> float:
        rate = ncores * self.kernel_rate(params) * self.efficiency(n, ncores, params.nb)
        return qr_flops(n) / (rate * 1e9)

    def factor_rate(self, n: int, ncores: int, params: TuneParams) -> float:
        return perf_normalize(n, self.factor_time(n, ncores, params))

    def factor_times(self, n: int, ncores: int, params: TuneParams, reps: int) -> list[float]:
        return [self.factor_time(n, ncores, params)] * reps


def parse_backend(tag: str):
    """Build a backend from ``measured`` or ``synthetic:<seed>``."""
    tag = tag.strip()
    if tag == "measured":
        return MeasuredBackend()
    kind, sep, seed = tag.partition(":")
    if kind == "synthetic" and sep:
        try:
            return SyntheticBackend(int(seed))
        except ValueError:
            pass
    raise ValueError(f"backend must be 'measured' or 'synthetic:<seed>', got {tag!r}")


def backend_from_env(default: str):
    return parse_backend(os.environ.get(ENV_VAR) or default)
