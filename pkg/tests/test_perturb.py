import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsic_explain.graphs import Graph, GraphSeries, UnitId
from hsic_explain.models import oracle_hub, oracle_pattern, oracle_series_chunk
from hsic_explain.perturb import (
    FeatureNoise,
    GroupStructure,
    IncompatibleSchemeError,
    PerturbationScheme,
    RemoveEdges,
    RemoveNodes,
    ResampleCategories,
    WalkFeatureNoise,
    WalkRemoveNodes,
    enumerate_units,
    generate,
    replicate_groups_over_time,
    scheme_from_obj,
    scheme_to_obj,
    walk_groups,
)

from conftest import graphs


def wheel(n):
    rim = [(i, (i + 1) % (n - 1)) for i in range(n - 1)]
    return Graph(n, tuple(rim + [(i, n - 1) for i in range(n - 1)]))


def cycle(n):
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def grid_graph():
    edges = []
    for r in range(4):
        for c in range(4):
            v = 4 * r + c
            if c < 3:
                edges.append((v, v + 1))
            if r < 3:
                edges.append((v, v + 4))
    feats = np.zeros((16, 1))
    feats[[5, 6, 9, 10], 0] = 1.0
    return Graph(16, tuple(edges), feats)


def toy_series(n=6, active_time=1):
    base = Graph(n, tuple((i, i + 1) for i in range(n - 1)))
    chunk = [1, 2, 3] if n >= 4 else list(range(n))
    snaps = []
    for t in range(3):
        feats = np.zeros((n, 1))
        if t == active_time:
            feats[chunk, 0] = 1.0
        snaps.append(base.with_features(feats))
    return GraphSeries(tuple(snaps))


class TestUnitEnumeration:
    def test_node_units(self):
        units = enumerate_units(cycle(4), "node")
        assert [u.key for u in units] == ["node:0", "node:1", "node:2", "node:3"]

    def test_edge_units_sorted(self):
        units = enumerate_units(cycle(3), "edge")
        assert [u.key for u in units] == ["edge:0-1", "edge:0-2", "edge:1-2"]

    def test_node_time_units(self):
        units = enumerate_units(toy_series(3), "node_time")
        assert len(units) == 9
        assert units[0].key == "node:0@t0"
        assert units[-1].key == "node:2@t2"

    def test_kind_target_mismatch(self):
        with pytest.raises(IncompatibleSchemeError):
            enumerate_units(cycle(3), "node_time")
        with pytest.raises(IncompatibleSchemeError):
            enumerate_units(toy_series(), "node")


class TestSchemeValidation:
    def test_parameter_ranges(self):
        with pytest.raises(ValueError):
            RemoveNodes(0)
        with pytest.raises(ValueError):
            FeatureNoise(0.0, 1.0)
        with pytest.raises(ValueError):
            FeatureNoise(0.5, 0.0)
        with pytest.raises(ValueError):
            WalkRemoveNodes(0)
        with pytest.raises(ValueError):
            PerturbationScheme(RemoveNodes(1), m_samples=1)

    def test_serialization_round_trip(self):
        for kind in [
            RemoveNodes(2),
            RemoveEdges(1),
            FeatureNoise(0.5, 0.3),
            WalkRemoveNodes(3),
            WalkFeatureNoise(3, 0.5),
            ResampleCategories(0.5),
        ]:
            s = PerturbationScheme(kind, m_samples=11, seed=7)
            assert scheme_from_obj(scheme_to_obj(s)) == s

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown scheme kind"):
            scheme_from_obj({"kind": "melt_graph"})

    def test_compat_errors(self):
        model = oracle_hub()
        with pytest.raises(IncompatibleSchemeError):
            generate(cycle(5), model, PerturbationScheme(RemoveEdges(1), 5), "node")
        with pytest.raises(IncompatibleSchemeError):
            generate(cycle(5), model, PerturbationScheme(RemoveNodes(1), 5), "edge")
        with pytest.raises(IncompatibleSchemeError):
            generate(cycle(5), model, PerturbationScheme(RemoveNodes(5), 5), "node")
        with pytest.raises(IncompatibleSchemeError):
            generate(cycle(5), model, PerturbationScheme(FeatureNoise(0.5, 1.0), 5), "node")

    def test_resample_requires_one_hot(self):
        g = cycle(4).with_features(np.full((4, 2), 0.5))
        with pytest.raises(IncompatibleSchemeError, match="one-hot"):
            generate(g, oracle_hub(), PerturbationScheme(ResampleCategories(0.5), 5), "node")


class TestGenerateRemoval:
    def test_sample_zero_is_original(self):
        ds = generate(wheel(8), oracle_hub(), PerturbationScheme(RemoveNodes(2), 21, seed=3), "node")
        assert ds.records[0].removed_nodes == ()
        for u in ds.units:
            assert ds.unit_features[u][0] == 1.0
        assert ds.predictions[0].tolist() == [0.05, 0.95]

    def test_exactly_k_removed_per_sample(self):
        ds = generate(wheel(8), oracle_hub(), PerturbationScheme(RemoveNodes(2), 31, seed=0), "node")
        existence = np.stack([ds.unit_features[u] for u in ds.units], axis=1)
        zero_counts = (existence[1:] == 0.0).sum(axis=1)
        assert np.all(zero_counts == 2)

    def test_edge_removal(self):
        ds = generate(
            cycle(6), oracle_hub(), PerturbationScheme(RemoveEdges(1), 25, seed=2), "edge"
        )
        assert ds.feature_kind == "binary"
        existence = np.stack([ds.unit_features[u] for u in ds.units], axis=1)
        assert np.all((existence[1:] == 0.0).sum(axis=1) == 1)

    def test_walk_victims_connected(self):
        g = wheel(10)
        ds = generate(g, oracle_hub(), PerturbationScheme(WalkRemoveNodes(3), 41, seed=5), "node")
        for rec in ds.records[1:]:
            vs = set(rec.removed_nodes)
            assert 1 <= len(vs) <= 4
            # victims lie on one walk, so they induce a connected subgraph
            sub_edges = [(u, v) for u, v in g.edges if u in vs and v in vs]
            comp = {next(iter(vs))}
            frontier = [next(iter(vs))]
            while frontier:
                x = frontier.pop()
                for a, b in sub_edges:
                    for y in ((b,) if a == x else (a,) if b == x else ()):
                        if y not in comp:
                            comp.add(y)
                            frontier.append(y)
            assert comp == vs

    def test_walk_removal_keeps_a_node_on_tiny_graph(self):
        g = Graph(2, ((0, 1),))
        ds = generate(g, oracle_hub(), PerturbationScheme(WalkRemoveNodes(4), 15, seed=1), "node")
        for rec in ds.records[1:]:
            assert len(rec.removed_nodes) <= 1

    def test_determinism(self):
        s = PerturbationScheme(RemoveNodes(2), 21, seed=9)
        a = generate(wheel(8), oracle_hub(), s, "node")
        b = generate(wheel(8), oracle_hub(), s, "node")
        assert a.records == b.records
        assert np.array_equal(a.predictions, b.predictions)
        for u in a.units:
            assert np.array_equal(a.unit_features[u], b.unit_features[u])

    def test_seed_changes_samples(self):
        a = generate(wheel(8), oracle_hub(), PerturbationScheme(RemoveNodes(2), 21, seed=0), "node")
        b = generate(wheel(8), oracle_hub(), PerturbationScheme(RemoveNodes(2), 21, seed=1), "node")
        assert a.records != b.records

    def test_existence_varies_somewhere(self):
        ds = generate(cycle(5), oracle_hub(), PerturbationScheme(RemoveNodes(1), 11, seed=0), "node")
        assert any(np.unique(f).size > 1 for f in ds.unit_features.values())


class TestGenerateNoise:
    def test_noise_counts(self):
        g = grid_graph()
        ds = generate(
            g, oracle_pattern(4), PerturbationScheme(FeatureNoise(0.25, 0.5), 15, seed=0), "node"
        )
        assert ds.feature_kind == "continuous"
        for rec in ds.records[1:]:
            assert len(rec.noised_nodes) == 4  # ceil(0.25 * 16)

    def test_unit_features_track_perturbed_values(self):
        g = grid_graph()
        ds = generate(
            g, oracle_pattern(4), PerturbationScheme(FeatureNoise(1.0, 0.5), 9, seed=3), "node"
        )
        f5 = ds.unit_features[UnitId.node(5)]
        assert f5[0] == 1.0  # original value
        assert np.unique(f5).size > 1

    def test_categorical_resample(self):
        feats = np.zeros((6, 3))
        feats[np.arange(6), [0, 1, 2, 0, 1, 2]] = 1.0
        g = cycle(6).with_features(feats)
        ds = generate(
            g, oracle_hub(), PerturbationScheme(ResampleCategories(0.5), 25, seed=4), "node"
        )
        assert ds.feature_kind == "categorical"
        f0 = ds.unit_features[UnitId.node(0)]
        assert f0[0] == 0.0
        assert set(np.unique(f0)) <= {0.0, 1.0, 2.0}


class TestGenerateSeries:
    def test_node_time_existence(self):
        s = toy_series()
        ds = generate(
            s, oracle_series_chunk(), PerturbationScheme(RemoveNodes(1), 41, seed=0), "node_time"
        )
        assert ds.feature_kind == "binary"
        for i, rec in enumerate(ds.records[1:], start=1):
            assert rec.time in (0, 1, 2)
            for v in rec.removed_nodes:
                for t in range(3):
                    want = 0.0 if t == rec.time else 1.0
                    assert ds.unit_features[UnitId.node_time(v, t)][i] == want

    def test_walk_noise_touches_one_snapshot(self):
        s = toy_series()
        ds = generate(
            s,
            oracle_series_chunk(),
            PerturbationScheme(WalkFeatureNoise(3, 0.5), 31, seed=7),
            "node_time",
        )
        # for every sample, units at unchosen times keep their original value
        for i, rec in enumerate(ds.records[1:], start=1):
            for t in range(3):
                if t == rec.time:
                    continue
                for v in range(s.num_nodes):
                    orig = s.snapshots[t].features[v, 0]
                    assert ds.unit_features[UnitId.node_time(v, t)][i] == orig

    def test_series_rejects_edge_scheme(self):
        with pytest.raises(IncompatibleSchemeError):
            generate(
                toy_series(),
                oracle_series_chunk(),
                PerturbationScheme(RemoveEdges(1), 9),
                "node_time",
            )


class TestWalkGroups:
    def test_node_coverage(self):
        g = wheel(9)
        gs = walk_groups(g, n_walks=4, walk_len=3, seed=0)
        assert gs.covered() == set(enumerate_units(g, "node"))
        assert len(gs.groups) >= 4

    def test_edge_coverage(self):
        g = cycle(7)
        gs = walk_groups(g, n_walks=3, walk_len=2, seed=1, unit_kind="edge")
        assert gs.covered() == set(enumerate_units(g, "edge"))

    def test_groups_are_walk_shaped(self):
        g = cycle(9)
        gs = walk_groups(g, n_walks=5, walk_len=3, seed=2)
        for grp in gs.groups:
            assert 1 <= len(grp) <= 4

    def test_isolated_node_becomes_singleton_member(self):
        g = Graph(4, ((0, 1), (1, 2)))  # node 3 isolated
        gs = walk_groups(g, n_walks=2, walk_len=2, seed=0)
        assert UnitId.node(3) in gs.covered()

    def test_deterministic(self):
        g = wheel(8)
        assert walk_groups(g, 4, 3, seed=5) == walk_groups(g, 4, 3, seed=5)

    @given(graphs(min_nodes=2, max_nodes=9, connected=True), st.integers(0, 50))
    @settings(max_examples=50, deadline=None)
    def test_coverage_property(self, g, seed):
        gs = walk_groups(g, n_walks=2 * g.num_nodes, walk_len=3, seed=seed)
        assert gs.covered() == set(enumerate_units(g, "node"))

    def test_replication_over_time(self):
        base = GroupStructure(((UnitId.node(0), UnitId.node(2)),))
        rep = replicate_groups_over_time(base, 2)
        assert len(rep.groups) == 2
        assert rep.groups[0] == (UnitId.node_time(0, 0), UnitId.node_time(2, 0))
        assert rep.groups[1] == (UnitId.node_time(0, 1), UnitId.node_time(2, 1))

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            GroupStructure(((),))
