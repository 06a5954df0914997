"""Smoke test for the gradcode Python bindings.

Build and install first (from the repository root):
    pip install maturin
    maturin build --release -m python/pyproject.toml -o dist
    pip install dist/gradcode-*.whl
Then run:
    python python/smoke_test.py
"""

import math
import random

import gradcode_py as gc


def check_decoding():
    book = gc.Codebook(12, 4, 2)
    assert book.threshold == 2
    rng = random.Random(0)
    grads = [[rng.uniform(-1, 1) for _ in range(5)] for _ in range(12)]
    # Cluster 1 owns batches 3, 4, 5; any two of its three codewords suffice.
    coded = [(slot, book.encode(1, slot, grads)) for slot in (0, 2)]
    got = book.decode(1, coded)
    want = [sum(grads[b][j] for b in (3, 4, 5)) / 3 for j in range(5)]
    assert all(math.isclose(a, b, abs_tol=1e-10) for a, b in zip(got, want)), (got, want)
    try:
        book.decode(1, coded[:1])
    except gc.GradcodeError as e:
        assert "decod" in str(e).lower()
    else:
        raise AssertionError("one codeword should not decode")


def check_scheduler():
    a = gc.AssignmentMatrix.from_shifts(12, 4, [[0, 1], [3, 2], [0, 3]])
    s = [1, 1, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1]
    sched = a.assign([v == 0 for v in s])
    assert sched.conflicts == [(11, 0)], sched.conflicts
    assert sched.swaps == [(11, 3, 3, 0)], sched.swaps
    assert sched.straggler_counts == [1, 2, 1, 1]
    assert sorted(w for c in sched.placement for w in c) == list(range(12))


def check_experiment():
    cfg = gc.Config(workers=20, clusters=5, load=3, replication=3, iterations=100, runs=4,
                    initial_stragglers=10, ssi="perfect")
    assert cfg.is_feasible()
    res = gc.run_experiment(cfg)
    assert len(res) == 4 * 100 * 4
    means = {name: mean for name, mean, _, _ in res.summaries}
    assert means["LB"] <= means["GC-DC"] < means["GC-SC"] < means["GC"], means
    straggling, rates = gc.generate_trace(cfg, 0)
    assert len(straggling) == 101 and sum(straggling[0]) == 10
    again = gc.Config.from_json(cfg.to_json())
    assert gc.run_experiment(again).records == res.records


def main():
    check_decoding()
    check_scheduler()
    check_experiment()
    print("gradcode_py smoke test passed")


if __name__ == "__main__":
    main()
