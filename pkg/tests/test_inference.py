import numpy as np
import pytest

from dani.cascades import build_corpus
from dani.inference import (
    accumulate,
    cascade_transition_row,
    cooccurrence,
    dani_weights,
    infer,
    rank_table,
    select_edges,
    theta,
    transition_matrix,
)
from dani.io import RawCascade
from dani.reference import reference_infer


@pytest.fixture
def corpus(worked_cascades):
    return build_corpus(worked_cascades)


def by_label(acc, nodes):
    return {nodes[u]: {nodes[v]: x for v, x in row.items()} for u, row in acc.rows().items()}


def test_rank_table_values():
    i, j, lam = rank_table(3)
    assert list(zip(i.tolist(), j.tolist())) == [(0, 1), (0, 2), (1, 2)]
    assert lam.tolist() == [0.25, 0.75, 1.0]
    with pytest.raises(ValueError):
        lam[0] = 1.0


def test_single_cascade_rows(corpus):
    nodes = corpus.nodes
    assert by_label(cascade_transition_row(corpus.vectors[0], 3), nodes) == {"a": {"b": 0.25, "c": 0.75}, "b": {"c": 1.0}}
    assert by_label(cascade_transition_row(corpus.vectors[1], 3), nodes) == {"b": {"a": 1.0}}


def test_accumulated_rows(corpus):
    lam = accumulate(cascade_transition_row(cv, 3) for cv in corpus.vectors)
    assert by_label(lam, corpus.nodes) == {"a": {"b": 0.25, "c": 0.75}, "b": {"a": 0.5, "c": 0.5}}
    assert lam.identical(transition_matrix(corpus.vectors, 3))


def test_accumulate_single_is_identity(corpus):
    row = cascade_transition_row(corpus.vectors[0], 3)
    assert accumulate([row]).identical(row)


def test_accumulate_needs_input():
    with pytest.raises(ValueError):
        accumulate([])


def test_cooccurrence_counts(corpus):
    stats = cooccurrence(corpus.vectors, 3)
    a, b, c = range(3)
    assert stats.participation.tolist() == [2, 2, 1]
    assert [stats.ordered(*p) for p in [(a, b), (b, a), (a, c), (b, c), (c, a)]] == [1, 1, 1, 1, 0]
    assert stats.unordered(a, b) == 2


def test_cooccurrence_absent_node():
    corpus = build_corpus([RawCascade("c0", (("a", 0.0), ("b", 1.0)))], nodes=["a", "b", "z"])
    stats = cooccurrence(corpus.vectors, 3)
    assert stats.participation[2] == 0
    assert theta(stats, 2, 0) == 0.0


def test_theta_worked(corpus):
    stats = cooccurrence(corpus.vectors, 3)
    assert [theta(stats, *p) for p in [(0, 1), (0, 2), (1, 0), (1, 2)]] == [0.5, 0.5, 0.5, 0.5]
    assert theta(stats, 2, 0) == 0.0


def test_theta_upper_bound():
    cascades = [RawCascade(f"c{i}", (("u", 0.0), ("v", 1.0 + i))) for i in range(4)]
    corpus = build_corpus(cascades)
    assert theta(cooccurrence(corpus.vectors, 2), 0, 1) == 1.0


def test_weights_worked(corpus, worked_weights):
    lam = transition_matrix(corpus.vectors, 3)
    w = dani_weights(lam, cooccurrence(corpus.vectors, 3), corpus.nodes).as_dict()
    assert w.keys() == worked_weights.keys()
    for key, expected in worked_weights.items():
        assert w[key] == pytest.approx(expected, abs=1e-12)
    assert infer(corpus).identical(dani_weights(lam, cooccurrence(corpus.vectors, 3), corpus.nodes))


def test_weights_positive_and_no_self_loops(corpus):
    w = infer(corpus)
    assert np.all(w.weight > 0)
    assert not np.any(w.src == w.dst)


def test_reverse_only_pair_not_emitted():
    # c always follows a, so (c, a) gets neither lam nor theta
    corpus = build_corpus([RawCascade("c0", (("a", 0.0), ("c", 1.0))), RawCascade("c1", (("a", 0.0), ("c", 2.0)))])
    assert set(infer(corpus).as_dict()) == {("a", "c")}


def test_mismatched_sizes(corpus):
    with pytest.raises(ValueError):
        dani_weights(transition_matrix(corpus.vectors, 3), cooccurrence(corpus.vectors, 4))


class TestSelectEdges:
    def test_all_positive(self, corpus):
        g = select_edges(infer(corpus))
        assert g.number_of_edges() == 4
        assert set(g.nodes) == {"a", "b", "c"}

    def test_top_k_tie_rule(self, corpus):
        g = select_edges(infer(corpus), top_k=2)
        assert set(g.edges) == {("a", "b"), ("b", "a")}

    def test_threshold(self, corpus):
        assert set(select_edges(infer(corpus), threshold=1.5).edges) == {("a", "b")}
        assert select_edges(infer(corpus), threshold=1.0).number_of_edges() == 3

    def test_top_k_larger_than_list(self, corpus):
        assert select_edges(infer(corpus), top_k=99).number_of_edges() == 4

    @pytest.mark.parametrize("kwargs", [{"top_k": 0}, {"top_k": -1}, {"top_k": 1.5}, {"threshold": -0.1}, {"top_k": 1, "threshold": 1.0}])
    def test_bad_arguments(self, corpus, kwargs):
        with pytest.raises(ValueError):
            select_edges(infer(corpus), **kwargs)

    def test_weight_attribute(self, corpus, worked_weights):
        g = select_edges(infer(corpus))
        assert g["a"]["b"]["weight"] == worked_weights[("a", "b")]


def test_reference_matches_worked_example(worked_cascades, worked_weights):
    ref = reference_infer(worked_cascades)
    assert ref.keys() == worked_weights.keys()
    for key, expected in worked_weights.items():
        assert ref[key] == pytest.approx(expected, abs=1e-12)


def test_empty_pair_set():
    corpus = build_corpus([RawCascade("c0", (("a", 0.0),))], nodes=["a", "b"])
    assert len(infer(corpus)) == 0
    assert reference_infer([RawCascade("c0", (("a", 0.0),))], nodes=["a", "b"]) == {}


def test_no_isolated_participants():
    rng = np.random.default_rng(5)
    labels = [f"v{i}" for i in range(12)]
    cascades = []
    for k in range(15):
        members = rng.choice(labels, size=int(rng.integers(2, 6)), replace=False)
        cascades.append(RawCascade(f"c{k}", tuple((str(m), float(t)) for t, m in enumerate(members))))
    corpus = build_corpus(cascades, nodes=labels)
    g = select_edges(infer(corpus))
    isolated = {n for n in g.nodes if g.degree(n) == 0}
    assert isolated.isdisjoint(corpus.participating_nodes())
