"""Wall-clock timing harness, prediction age and closed-form FLOP counts."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Any, Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ContractError

WARMUP = 10


@dataclass(frozen=True)
class TimingReport:
    """Per-call wall-clock statistics in microseconds.

    ``std_us`` is the population standard deviation from the two-pass
    formula (mean first, then mean squared deviation).
    """

    trials: int
    mean_us: float
    std_us: float
    min_us: float
    max_us: float
    threads: int
    input_shape: str
    warmup: int = WARMUP

    def to_json(self) -> dict:
        return asdict(self)


def _describe(x) -> str:
    if isinstance(x, np.ndarray):
        return "x".join(map(str, x.shape))
    if isinstance(x, (tuple, list)):
        return "(" + ", ".join(_describe(e) for e in x) + ")"
    shape = getattr(x, "shape", None)
    return "x".join(map(str, shape)) if shape is not None else type(x).__name__


def time_op(op: Callable[[Any], Any], make_input: Callable[[np.random.Generator], Any],
            trials: int = 1000, seed: int = 0, threads: int = 1, warmup: int = WARMUP) -> TimingReport:
    """Time ``op`` on a freshly generated input for every trial.

    ``make_input`` draws a constant-shape input from the seeded generator;
    generation happens outside the timed region.  BLAS/OpenMP pools are
    capped at ``threads`` for the duration of the run.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    samples = np.empty(trials, dtype=np.float64)
    shape = ""
    with threadpool_limits(limits=threads):
        for _ in range(warmup):
            op(make_input(rng))
        for i in range(trials):
            x = make_input(rng)
            if i == 0:
                shape = _describe(x)
            start = time.perf_counter_ns()
            op(x)
            samples[i] = (time.perf_counter_ns() - start) / 1e3
    mean = samples.sum() / trials
    std = float(np.sqrt(np.square(samples - mean).sum() / trials))
    return TimingReport(trials, float(mean), std, float(samples.min()), float(samples.max()), threads, shape, warmup)


@dataclass(frozen=True)
class AgeReport:
    """Prediction age in ms: negative means lag, positive means anticipation."""

    dt_forecast_ms: float
    runtime_ms: float
    age_ms: float

    def to_json(self) -> dict:
        return asdict(self)


def prediction_age(dt_forecast_ms: float, runtime_ms: float) -> AgeReport:
    return AgeReport(dt_forecast_ms, runtime_ms, dt_forecast_ms - runtime_ms)


# FLOP conventions: one multiply-accumulate counts as 2 FLOPs; softmax,
# exp and comparisons are not counted.
#
# Bilinear warp, per output pixel:
#   rescale flow (2 mul) + sample coordinate (2 sub)            = 4
#   fractional offsets (2 sub) + complements (2 sub) + 4 weights = 8
#   4 weighted taps (4 mul) summed (3 add)                      = 7
WARP_FLOPS_PER_PIXEL = 19
# IWE splat, per event:
#   transport: time offset (1 sub) + normalise (1 div) + 2 mul + 2 add = 6
#   splat: offsets (2 sub) + complements (2 sub) + 4 weights (4 mul)
#          + 4 accumulations (4 add)                                   = 12
SPLAT_FLOPS_PER_EVENT = 18
DEFAULT_INPUT_SHAPE = (480, 640, 2)


def _matmul(m: int, k: int, n: int) -> int:
    return 2 * m * k * n


def flop_estimate(desc: dict | list) -> int:
    """Closed-form FLOP count for an operation descriptor.

    Descriptors are dicts with an ``op`` key:

    * ``{"op": "matmul", "M", "K", "N"}``: ``2*M*K*N``
    * ``{"op": "warp", "H", "W"}``: ``WARP_FLOPS_PER_PIXEL * H * W``
    * ``{"op": "splat", "N"}``: ``SPLAT_FLOPS_PER_EVENT * N``
    * ``{"op": "atc", "C", "H", "W", "heads"}``: the literal attention with
      the query broadcast to all ``H*W`` positions.  That is four ``HW x C x C``
      projections plus, per head, ``HW x dk x HW`` scores and
      ``HW x HW x dk`` value mixing.

    A list of descriptors is counted as the sum of its parts.
    """
    if isinstance(desc, (list, tuple)):
        return sum(flop_estimate(d) for d in desc)
    op = desc.get("op")
    if op == "matmul":
        return _matmul(desc["M"], desc["K"], desc["N"])
    if op == "warp":
        return WARP_FLOPS_PER_PIXEL * desc["H"] * desc["W"]
    if op == "splat":
        return SPLAT_FLOPS_PER_EVENT * desc["N"]
    if op == "atc":
        return flop_estimate(atc_matmuls(desc["C"], desc["H"], desc["W"], desc.get("heads", 1)))
    raise ContractError(f"unknown op descriptor {desc!r}")


def atc_matmuls(c: int, h: int, w: int, heads: int) -> list[dict]:
    if heads < 1 or c % heads:
        raise ContractError("channel count must be divisible by the head count")
    n, dk = h * w, c // heads
    proj = [{"op": "matmul", "M": n, "K": c, "N": c} for _ in range(4)]  # q, k, v, out
    per_head = [{"op": "matmul", "M": n, "K": dk, "N": n}, {"op": "matmul", "M": n, "K": n, "N": dk}]
    return proj + per_head * heads
