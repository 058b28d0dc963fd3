"""Install-time empirical autotuner for tile QR factorization."""

from .params import PerfSample, TuneParams, kernel_gflops, perf_normalize

__version__ = "0.1.0"

__all__ = ["PerfSample", "TuneParams", "kernel_gflops", "perf_normalize"]
