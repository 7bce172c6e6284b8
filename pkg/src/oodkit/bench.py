"""Throughput/latency harness for the confidence-scaled top-k search.

Timings are wall-clock and machine-dependent; the scored values are part
of the determinism contract and are checked to be identical across thread
counts.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import guidance


@dataclass
class BenchReport:
    n: int
    d: int
    k: int
    queries: int
    repeats: int
    rows: list = field(default_factory=list)  # (threads, qps, p50_ms, p99_ms)
    values_consistent: bool = True

    def format(self) -> str:
        if self.repeats == 0 or not self.rows:
            return "bench: no repeats requested; nothing measured\n"
        lines = [
            f"bank {self.n}x{self.d}, k={self.k}, "
            f"{self.queries} queries x {self.repeats} repeats",
            f"{'threads':>7}  {'qps':>10}  {'p50 ms':>9}  {'p99 ms':>9}",
        ]
        for threads, qps, p50, p99 in self.rows:
            lines.append(f"{threads:>7}  {qps:>10.1f}  {p50:>9.3f}  {p99:>9.3f}")
        lines.append(
            "scored values identical across thread counts: "
            + ("yes" if self.values_consistent else "NO")
        )
        return "\n".join(lines) + "\n"


def _measure(index, queries, k, threads):
    start = time.perf_counter()
    _, values = guidance.batch_scaled_topk(index, queries, k, threads)
    elapsed = time.perf_counter() - start
    return values, queries.shape[0] / elapsed


def _latencies(index, queries, k):
    """Per-query latency, measured one query at a time."""
    out = np.empty(queries.shape[0])
    for i, q in enumerate(queries):
        start = time.perf_counter()
        guidance.scaled_topk(index, q, k)
        out[i] = time.perf_counter() - start
    return out


def run_bench(index, k=10, queries=512, repeats=3, threads_list=(1, 4), seed=0):
    """Benchmark batch_scaled_topk on random unit-ish queries.

    qps comes from the batched path (best of ``repeats``); p50/p99 from
    per-query timing. With repeats == 0 nothing is measured.
    """
    report = BenchReport(
        n=index.n, d=index.d, k=k, queries=int(queries), repeats=int(repeats)
    )
    if repeats == 0 or queries == 0:
        return report
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((int(queries), index.d))
    reference = None
    lat = _latencies(index, Q[: min(128, Q.shape[0])], k)
    p50, p99 = np.percentile(lat, [50, 99]) * 1e3
    for threads in threads_list:
        best_qps = 0.0
        values = None
        for _ in range(int(repeats)):
            values, qps = _measure(index, Q, k, threads)
            best_qps = max(best_qps, qps)
        if reference is None:
            reference = values
        elif not np.array_equal(reference, values):
            report.values_consistent = False
        report.rows.append((threads, best_qps, p50, p99))
    return report
