"""Single-threaded CPU benchmark harness built on the reference kernels.

Counting and timing are separate passes: ``count_ops`` runs a kernel with the
counting backend, ``time_layer`` runs it uninstrumented under a one-thread
BLAS limit and reports median/mean/std wall time over repeated runs.
"""

from __future__ import annotations

import enum
import logging
import os
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import kernels
from .dataset import TimingRecord, save_dataset
from .errors import MemoryCapError, SizeGuardError
from .layers import (
    Conv2DDescriptor,
    DenseDescriptor,
    GemmSpec,
    LayerDescriptor,
    OpCount,
    conv_flops,
    dense_flops,
    gemm_flops,
    output_shape,
)

__all__ = [
    "KernelVariant",
    "BenchConfig",
    "BenchResult",
    "CPU_DEVICE",
    "COUNT_FLOPS_LIMIT",
    "expected_count",
    "count_ops",
    "estimate_bytes",
    "memcap_bytes",
    "time_layer",
    "run_sweep_bench",
]

log = logging.getLogger(__name__)

CPU_DEVICE = "cpu-singlethread"
COUNT_FLOPS_LIMIT = 1_000_000_000
MEMCAP_ENV = "ALPHAFLOPS_BENCH_MEMCAP_MB"
_ITEM = np.dtype(np.float32).itemsize


class KernelVariant(str, enum.Enum):
    NAIVE_DIRECT = "naive-direct"
    IM2COL_GEMM = "im2col-gemm"


@dataclass(frozen=True)
class BenchConfig:
    warmup_runs: int = 3
    timed_runs: int = 30
    seed: int = 0
    kernel_variant: KernelVariant = KernelVariant.NAIVE_DIRECT
    memcap_mb: Optional[float] = None

    def __post_init__(self):
        if self.timed_runs < 1:
            raise ValueError("timed_runs must be >= 1")
        if self.warmup_runs < 0:
            raise ValueError("warmup_runs must be >= 0")
        object.__setattr__(self, "kernel_variant", KernelVariant(self.kernel_variant))


def expected_count(layer: LayerDescriptor, variant: KernelVariant = KernelVariant.NAIVE_DIRECT) -> int:
    """The closed-form count the instrumented kernel must reproduce."""
    if isinstance(layer, DenseDescriptor):
        return dense_flops(layer, exact=True)
    if KernelVariant(variant) is KernelVariant.IM2COL_GEMM:
        w_out, h_out = output_shape(layer)
        spec = GemmSpec(m=w_out * h_out, k=layer.k1 * layer.k2 * layer.c_in, n=layer.c_out)
        return layer.batch * gemm_flops(spec, exact=False)
    return conv_flops(layer)


@dataclass(frozen=True)
class BenchResult:
    layer: LayerDescriptor
    op_count: OpCount
    median_ms: float
    mean_ms: float
    std_ms: float
    checksum: float = 0.0
    variant: KernelVariant = KernelVariant.NAIVE_DIRECT

    def __post_init__(self):
        expected = expected_count(self.layer, self.variant)
        if self.op_count.total() != expected:
            raise AssertionError(
                f"instrumented count {self.op_count.total()} != formula count {expected} for {self.layer}"
            )
        if not self.median_ms > 0 or not self.mean_ms > 0 or self.std_ms < 0:
            raise ValueError("timing statistics out of range")


def _inputs(layer, seed):
    rng = np.random.default_rng(seed)
    if isinstance(layer, DenseDescriptor):
        weight = rng.standard_normal((layer.d_out, layer.d_in), dtype=np.float32)
        x = rng.standard_normal(layer.d_in, dtype=np.float32)
        bias = rng.standard_normal(layer.d_out, dtype=np.float32) if layer.has_bias else None
        return weight, x, bias
    x = rng.standard_normal((layer.batch, layer.c_in, layer.h_in, layer.w_in), dtype=np.float32)
    weight = rng.standard_normal((layer.c_out, layer.c_in, layer.k2, layer.k1), dtype=np.float32)
    return x, weight


def _runner(layer, variant, ops, data):
    if isinstance(layer, DenseDescriptor):
        weight, x, bias = data
        return lambda: kernels.matvec_bias(weight, x, bias, ops)
    x, weight = data
    if variant is KernelVariant.IM2COL_GEMM:
        return lambda: kernels.conv_im2col(x, weight, layer, ops)
    return lambda: kernels.conv_direct(x, weight, layer, ops)


def count_ops(
    layer: LayerDescriptor,
    variant: KernelVariant = KernelVariant.NAIVE_DIRECT,
    max_flops: Optional[int] = COUNT_FLOPS_LIMIT,
    seed: int = 0,
) -> OpCount:
    """Run the instrumented kernel for ``layer`` and return its tally."""
    variant = KernelVariant(variant)
    if max_flops is not None and expected_count(layer, variant) > max_flops:
        raise SizeGuardError(f"{layer} exceeds the counting limit of {max_flops} FLOPs")
    ops = kernels.CountingOps()
    _runner(layer, variant, ops, _inputs(layer, seed))()
    return ops.count


def estimate_bytes(layer: LayerDescriptor, variant: KernelVariant = KernelVariant.NAIVE_DIRECT) -> int:
    """Rough peak working set of one kernel invocation."""
    if isinstance(layer, DenseDescriptor):
        return _ITEM * (layer.d_in * layer.d_out + layer.d_in + 3 * layer.d_out)
    c: Conv2DDescriptor = layer
    w_out, h_out = output_shape(c)
    x = c.batch * c.c_in * c.h_in * c.w_in
    padded = c.batch * c.c_in * (h_out * c.stride + c.k2) * (w_out * c.stride + c.k1)
    weight = c.c_out * c.c_in * c.k1 * c.k2
    out = c.batch * c.c_out * h_out * w_out
    if KernelVariant(variant) is KernelVariant.IM2COL_GEMM:
        scratch = h_out * w_out * (c.k1 * c.k2 * c.c_in + 2 * c.c_out) + weight
    else:
        scratch = 2 * min(kernels.BLOCK_ELEMS, c.c_out * h_out * w_out) + c.c_out * w_out
    return _ITEM * (x + padded + weight + out + scratch)


def memcap_bytes(config: BenchConfig) -> float:
    mb = config.memcap_mb
    if mb is None:
        mb = float(os.environ.get(MEMCAP_ENV, "2048"))
    return mb * 1024 * 1024


def _checksum(out):
    return float(np.abs(out).sum(dtype=np.float64))


def time_layer(layer: LayerDescriptor, config: BenchConfig = BenchConfig()) -> BenchResult:
    """Count, then time ``layer`` on one CPU thread."""
    variant = config.kernel_variant
    need = estimate_bytes(layer, variant)
    cap = memcap_bytes(config)
    if need > cap:
        raise MemoryCapError(f"{layer} needs about {need / 2**20:.1f} MiB, over the {cap / 2**20:.0f} MiB cap")

    data = _inputs(layer, config.seed)
    counter = kernels.CountingOps()
    _runner(layer, variant, counter, data)()

    run = _runner(layer, variant, kernels.NumpyOps(), data)
    samples = []
    checksum = None
    with threadpool_limits(limits=1):
        for _ in range(config.warmup_runs):
            run()
        for _ in range(config.timed_runs):
            start = time.perf_counter_ns()
            out = run()
            samples.append((time.perf_counter_ns() - start) / 1e6)
            # consuming the output keeps the work observable
            value = _checksum(out)
            if checksum is None:
                checksum = value
            elif value != checksum:
                raise RuntimeError(f"kernel output changed between runs for {layer}")
    std = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return BenchResult(
        layer=layer,
        op_count=counter.count,
        median_ms=statistics.median(samples),
        mean_ms=statistics.fmean(samples),
        std_ms=std,
        checksum=checksum,
        variant=variant,
    )


def run_sweep_bench(
    sweep: Sequence[LayerDescriptor],
    config: BenchConfig,
    out_path,
    device: str = CPU_DEVICE,
) -> tuple[list[TimingRecord], list[LayerDescriptor]]:
    """Time every layer of ``sweep`` and write the timing CSV.

    Layers over the memory cap are skipped with a warning; returns the
    written records and the skipped layers.
    """
    records, skipped = [], []
    for layer in sweep:
        try:
            result = time_layer(layer, config)
        except MemoryCapError as exc:
            log.warning("skipping layer: %s", exc)
            skipped.append(layer)
            continue
        records.append(
            TimingRecord(
                layer=layer,
                device=device,
                time_ms=result.median_ms,
                runs=config.timed_runs,
                time_std_ms=result.std_ms,
            )
        )
    save_dataset(records, Path(out_path))
    return records, skipped
