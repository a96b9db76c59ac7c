import io
import logging
import math

import networkx as nx
import pytest

from dani.metrics import (
    DegreeDistribution,
    cluster_density,
    conductance,
    connected_node_count,
    degree_distribution,
    flagged_metrics,
    js_distance,
    link_f1,
    link_report,
    relative_difference,
    structural_profile,
    undirected,
    write_histogram,
)


def digraph(edges, nodes=()):
    g = nx.DiGraph()
    g.add_nodes_from(nodes)
    g.add_edges_from(edges)
    return g


class TestLinkF1:
    def test_worked_counts(self):
        truth = digraph([("a", "b"), ("b", "c")])
        inferred = digraph([("a", "b"), ("a", "c")])
        f1, mf1, mif1 = link_f1(truth, inferred)
        assert f1 == 0.5
        assert mif1 == pytest.approx(4 / 6, abs=1e-15)
        # negatives: tn=3, fp=1, fn=1 -> 0.75
        assert mf1 == pytest.approx((0.5 + 0.75) / 2)

    def test_identity(self):
        g = digraph([("a", "b"), ("b", "c"), ("c", "a")], nodes="abcd")
        assert link_f1(g, g.copy()) == (1.0, 1.0, 1.0)

    def test_empty_inferred(self):
        truth = digraph([("a", "b")])
        assert link_f1(truth, digraph([], nodes="ab"))[0] == 0.0

    def test_empty_truth_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert link_f1(digraph([], nodes="ab"), digraph([("a", "b")]))[0] == 0.0
        assert "no edges" in caplog.text

    def test_self_loops_ignored(self):
        truth = digraph([("a", "b")])
        assert link_f1(truth, digraph([("a", "b"), ("a", "a")]))[0] == 1.0


class TestDegreeDistribution:
    def test_path(self):
        dist = degree_distribution(digraph([("a", "b"), ("b", "c")]))
        assert dist.as_dict() == pytest.approx({1: 2 / 3, 2: 1 / 3})

    def test_modes(self):
        g = digraph([("a", "b"), ("a", "c")])
        assert degree_distribution(g, "out").as_dict() == pytest.approx({0: 2 / 3, 2: 1 / 3})
        assert degree_distribution(g, "in").as_dict() == pytest.approx({0: 1 / 3, 1: 2 / 3})
        with pytest.raises(ValueError):
            degree_distribution(g, "bogus")

    def test_edgeless(self):
        assert degree_distribution(digraph([], nodes="abc")).as_dict() == {0: 1.0}

    def test_histogram(self):
        buf = io.StringIO()
        write_histogram(degree_distribution(digraph([("a", "b"), ("b", "c")])), buf)
        assert buf.getvalue() == "1\t0.666667\n2\t0.333333\n"


class TestJs:
    P = DegreeDistribution((1, 2), (0.75, 0.25))
    Q = DegreeDistribution((1, 2), (0.25, 0.75))

    def test_symmetric_pair(self):
        assert js_distance(self.P, self.Q) == pytest.approx(math.sqrt(0.5 * math.log(3)), abs=1e-6)

    def test_symmetry_is_exact(self):
        r = DegreeDistribution((0, 3, 4), (0.2, 0.3, 0.5))
        assert js_distance(self.P, r) == js_distance(r, self.P)

    def test_identical_is_zero(self):
        assert js_distance(self.P, self.P) == 0.0

    def test_disjoint_support_finite(self):
        a = DegreeDistribution((1,), (1.0,))
        b = DegreeDistribution((5,), (1.0,))
        assert math.isfinite(js_distance(a, b)) and js_distance(a, b) > 1

    def test_empty(self):
        assert js_distance(DegreeDistribution((), ()), DegreeDistribution((), ())) == 0.0


class TestStructure:
    def test_conductance(self):
        g = nx.Graph([("a", "b"), ("b", "c")])
        assert conductance(g, {"a", "b"}) == pytest.approx(1 / 3)
        assert conductance(g, {"a", "b", "c"}) == 0.0

    def test_clustering(self):
        g = nx.Graph([("a", "b"), ("b", "c"), ("a", "c"), ("c", "d")])
        assert nx.average_clustering(g) == pytest.approx(0.5833, abs=1e-4)
        profile = structural_profile(digraph(g.edges), [{"a", "b", "c", "d"}])
        assert profile["CC"] == pytest.approx(7 / 12)

    def test_density(self):
        g = nx.Graph([("a", "b"), ("b", "c")])
        assert cluster_density(g, {"a", "b", "c"}) == pytest.approx(2 / 3)
        assert cluster_density(g, {"a"}) is None

    def test_undirected_merges_reciprocal(self):
        g = undirected(digraph([("a", "b"), ("b", "a"), ("c", "c")]))
        assert g.number_of_edges() == 1 and "c" in g

    def test_connected_nodes(self):
        assert connected_node_count(digraph([("a", "b")], nodes="abcd")) == 2

    def test_profile_bounds(self):
        g = nx.DiGraph(nx.gnp_random_graph(30, 0.2, seed=1, directed=True))
        profile = structural_profile(g, [set(range(0, 15)), set(range(15, 30))])
        for key in ("Cnd", "rho", "CC"):
            assert 0.0 <= profile[key] <= 1.0
        assert profile["ACS"] == 15.0

    def test_profile_rejects_foreign_nodes(self):
        with pytest.raises(ValueError):
            structural_profile(digraph([("a", "b")]), [{"a", "z"}])


def test_relative_difference(caplog):
    assert relative_difference(0.2, 0.3) == pytest.approx(0.5)
    assert relative_difference(0.0, 0.0) == 0.0
    with caplog.at_level(logging.WARNING):
        assert relative_difference(0.0, 0.1) == math.inf
    assert "inf" in caplog.text


def test_link_report_identity():
    g = digraph([("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")])
    comms = [{"a", "b", "c"}, {"d"}]
    report = link_report(g, g.copy(), comms, comms)
    assert report["F1"] == 1.0 and report["JS"] == 0.0
    assert all(report[k] == 0.0 for k in ("dCN", "drho", "dCC", "dCnd"))
    assert flagged_metrics(report) == []
    assert flagged_metrics({"x": math.inf, "y": 1.0}) == ["x"]
