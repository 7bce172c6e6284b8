import time

import numpy as np

from oodkit import FeatureBank, build_index
from oodkit.bench import run_bench
from oodkit.guidance import batch_scaled_topk


def small_index(n=2000, d=256, seed=0):
    rng = np.random.default_rng(seed)
    bank = FeatureBank(
        features=rng.standard_normal((n, d)),
        K=4,
        logits=rng.standard_normal((n, 4)),
    )
    return build_index(bank)


class TestRunBench:
    def test_zero_repeats_measures_nothing(self):
        rep = run_bench(small_index(200, 16), repeats=0)
        assert rep.rows == []
        assert "nothing measured" in rep.format()

    def test_values_consistent_across_threads(self):
        rep = run_bench(
            small_index(400, 32), k=5, queries=128, repeats=1, threads_list=(1, 3)
        )
        assert rep.values_consistent
        assert len(rep.rows) == 2

    def test_doubling_queries_roughly_doubles_time(self):
        """Brute-force search is linear in the query count."""
        index = small_index()
        rng = np.random.default_rng(1)
        q2 = rng.standard_normal((512, index.d))
        q1 = q2[:256]

        def best_time(queries):
            best = np.inf
            for _ in range(5):
                start = time.perf_counter()
                batch_scaled_topk(index, queries, 10)
                best = min(best, time.perf_counter() - start)
            return best

        t1, t2 = best_time(q1), best_time(q2)
        assert 0.75 <= t2 / (2 * t1) <= 1.25
