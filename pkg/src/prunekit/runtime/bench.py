"""Wall-clock inference benchmarking on the host machine, reported next
to the analytic op count for the same graph."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from prunekit.ir import ModelGraph, cost_report
from prunekit.runtime.engine import forward
from prunekit.runtime.weights import WeightStore


@dataclass
class BenchResult:
    samples_ms: list[float]
    batch_size: int
    giga_ops: float

    @property
    def mean_ms(self) -> float:
        return float(np.mean(self.samples_ms))

    @property
    def std_ms(self) -> float:
        return float(np.std(self.samples_ms))

    @property
    def per_image_ms(self) -> float:
        return self.mean_ms / self.batch_size


def bench_inference(
    graph: ModelGraph,
    weights: WeightStore,
    batch_size: int = 32,
    repetitions: int = 10,
    warmup: int = 3,
    seed: int = 0,
) -> BenchResult:
    if repetitions < 10:
        raise ValueError("repetitions must be >= 10")
    if warmup < 3:
        raise ValueError("warmup must be >= 3")
    rng = np.random.default_rng(seed)
    batch = rng.standard_normal((batch_size, *graph.input_shape.dims), dtype=np.float32)
    for _ in range(warmup):
        forward(graph, weights, batch, mode="eval")
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        forward(graph, weights, batch, mode="eval")
        samples.append((time.perf_counter() - t0) * 1000.0)
    return BenchResult(samples_ms=samples, batch_size=batch_size, giga_ops=cost_report(graph).total_giga_ops)
