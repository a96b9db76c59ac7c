import os

import numpy as np
import pytest

import dani.pipeline as pipeline
from dani.cascades import build_corpus
from dani.inference import infer
from dani.io import RawCascade
from dani.pipeline import DANI_TOPOLOGY, Stage, StagePlan, bucket_of, infer_pipeline, partition_cascades, run_pipeline


def random_corpus(seed, n_nodes=15, n_cascades=40, max_len=8):
    rng = np.random.default_rng(seed)
    labels = [f"u{i:02d}" for i in range(n_nodes)]
    cascades = []
    for k in range(n_cascades):
        size = int(rng.integers(2, max_len + 1))
        members = rng.choice(n_nodes, size=size, replace=False)
        times = rng.exponential(1.0, size)
        cascades.append(RawCascade(f"c{k}", tuple((labels[m], float(t)) for m, t in zip(members, times))))
    return build_corpus(cascades, nodes=labels)


def test_partition_sizes():
    vectors = list(range(5))
    assert [len(p) for p in partition_cascades(vectors, 2)] == [3, 2]
    assert partition_cascades(vectors, 1) == [vectors]
    parts = partition_cascades(vectors, 8)
    assert sum(map(len, parts)) == 5 and parts[7] == []
    with pytest.raises(ValueError):
        partition_cascades(vectors, 0)


def test_plan_validation():
    StagePlan(partitions=3)
    with pytest.raises(ValueError):
        StagePlan(partitions=0)
    with pytest.raises(ValueError, match="before"):
        StagePlan(stages=(Stage("reducer1", "reduce", ("shuffle_rows",)),))
    with pytest.raises(ValueError, match="fixed"):
        StagePlan(stages=DANI_TOPOLOGY[:-1])


def test_bucket_of_is_deterministic_and_spread():
    cols = (np.arange(1000, dtype=np.int64), np.arange(1000, dtype=np.int64) % 7)
    b = bucket_of(cols, 4)
    assert np.array_equal(b, bucket_of(cols, 4))
    assert set(np.unique(b).tolist()) == {0, 1, 2, 3}


def test_worked_example_two_partitions(worked_cascades, worked_weights):
    corpus = build_corpus(worked_cascades)
    w = infer_pipeline(corpus, partitions=2)
    assert w.identical(infer(corpus))
    for key, expected in worked_weights.items():
        assert w.as_dict()[key] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("p", [1, 2, 3, 4, 8])
def test_equivalent_to_sequential(seed, p):
    corpus = random_corpus(seed)
    assert infer_pipeline(corpus, partitions=p).identical(infer(corpus))


def test_small_splits_change_nothing(monkeypatch):
    corpus = random_corpus(11, n_cascades=60)
    expected = infer(corpus)
    monkeypatch.setattr(pipeline, "SPLIT_PAIRS", 7)
    for p in (1, 3):
        assert infer_pipeline(corpus, partitions=p).identical(expected)


def test_empty_partition_has_no_effect():
    corpus = random_corpus(3)
    parts = partition_cascades(corpus.vectors, 2) + [[]]
    out = run_pipeline(parts, StagePlan(partitions=3), corpus.nodes)
    assert out.identical(infer(corpus))


def test_worker_count_irrelevant():
    corpus = random_corpus(8)
    assert infer_pipeline(corpus, partitions=4, workers=1).identical(infer_pipeline(corpus, partitions=4, workers=4))


def test_debug_dump(tmp_path, worked_cascades):
    infer_pipeline(build_corpus(worked_cascades), partitions=2, debug_dir=tmp_path)
    names = sorted(p.stem for p in tmp_path.glob("*.tsv"))
    assert names == ["mapper1", "mapper2", "mapper3", "mapper4", "reducer1", "reducer2", "reducer3", "reducer4", "reducer5"]
    lines = (tmp_path / "mapper1.tsv").read_text().splitlines()
    assert lines[0] == "task\tcascade\tu\tv\tvalue"
    # one record per ordered pair: 3 from the first cascade, 1 from the second
    assert len(lines) == 1 + 4
    reducer5 = (tmp_path / "reducer5.tsv").read_text().splitlines()
    assert len(reducer5) == 1 + 4


@pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="throughput check needs at least 4 cores")
def test_throughput_scales_with_partitions():
    import time

    corpus = random_corpus(0, n_nodes=200, n_cascades=100_000, max_len=12)
    timings = {}
    for p in (1, 4):
        start = time.perf_counter()
        infer_pipeline(corpus, partitions=p)
        timings[p] = time.perf_counter() - start
    assert timings[4] <= 0.6 * timings[1]
