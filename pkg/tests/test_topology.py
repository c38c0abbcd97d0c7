import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogplace.topology import (DEFAULT_CLOUD_TOTAL, DEFAULT_FOG_TOTAL, UNLIMITED, TopologyError,
                               assign_capacities, generate_topology, graphs_equal, read_topology,
                               write_topology)

from conftest import make_graph


def to_nx(g):
    G = nx.Graph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(g.edges)
    return G


# -- generation ------------------------------------------------------------

def test_ba_m1_is_a_tree():
    g = generate_topology("BA", 5, {"m": 1}, seed=7)
    assert g.n == 5
    assert len(g.edges) == 4
    assert nx.is_tree(to_nx(g))


def test_er_full_probability_two_nodes():
    g = generate_topology("ER", 2, {"p": 1.0}, seed=0)
    assert g.edges == [(0, 1)]


def test_ws_edge_count_and_degrees():
    g = generate_topology("WS", 200, {"k": 4, "beta": 0.1}, seed=42)
    assert len(g.edges) == 400
    deg = np.bincount(np.array(g.edges).ravel(), minlength=200)
    assert deg.mean() == 4.0
    # ring-rewire keeps most nodes at or next to the ring degree
    assert np.mean(np.abs(deg - 4) <= 1) > 0.85


def test_ws_degree_histogram_matches_networkx_construction():
    mine, ref = np.zeros(12), np.zeros(12)
    for s in range(10):
        g = generate_topology("WS", 200, {"k": 4, "beta": 0.1}, seed=s)
        deg = np.bincount(np.array(g.edges).ravel(), minlength=200)
        mine += np.bincount(deg.clip(max=11), minlength=12)
        G = nx.watts_strogatz_graph(200, 4, 0.1, seed=s)
        assert G.number_of_edges() == 400
        ref += np.bincount(np.array([d for _, d in G.degree()]).clip(max=11), minlength=12)
    mine, ref = mine / mine.sum(), ref / ref.sum()
    assert np.abs(mine - ref).max() < 0.03


def test_ba_attachment_produces_hubs():
    g = generate_topology("BA", 200, {"m": 2}, seed=1)
    deg = np.bincount(np.array(g.edges).ravel(), minlength=200)
    assert len(g.edges) == 2 + 2 * (200 - 3)
    assert deg.max() >= 4 * deg.mean()


@pytest.mark.parametrize("kind,params", [("BA", {"m": 0}), ("BA", {"m": 5}), ("WS", {"k": 3}),
                                         ("WS", {"k": 4, "beta": 1.5}), ("ER", {"p": 0.0}),
                                         ("XX", {})])
def test_invalid_parameters(kind, params):
    with pytest.raises(TopologyError):
        generate_topology(kind, 5, params, seed=0)


def test_too_few_nodes():
    with pytest.raises(TopologyError):
        generate_topology("BA", 1)


def test_sparse_er_is_bridged_and_recorded():
    g = generate_topology("ER", 60, {"p": 0.01}, seed=3)
    assert g.is_connected()
    assert g.meta["bridges"] > 0
    assert len(nx.minimum_edge_cut(to_nx(g))) >= 1


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(["BA", "WS", "ER"]), n=st.integers(6, 60), seed=st.integers(0, 2**32 - 1))
def test_generated_graphs_are_connected_and_deterministic(kind, n, seed):
    g1 = generate_topology(kind, n, {"p": 0.1}, seed=seed)
    g2 = generate_topology(kind, n, {"p": 0.1}, seed=seed)
    assert g1.is_connected()
    assert nx.is_connected(to_nx(g1))
    assert graphs_equal(g1, g2)
    assert len(g1.cloud_ids) == 1
    for (u, v), d in g1.delays.items():
        assert g1.link_delay(u, v) == g1.link_delay(v, u) == d
        assert d > 0


def test_link_delays_fog_range_and_wan():
    g = generate_topology("BA", 50, seed=5)
    cloud = g.cloud_ids[0]
    for (u, v), d in g.delays.items():
        if cloud in (u, v):
            assert d == 50.0
        else:
            assert 1.0 <= d <= 10.0
    assert g.link_delay(3, 3) == 0.0


# -- hop queries -----------------------------------------------------------

def test_self_distance_zero():
    g = generate_topology("BA", 10, seed=0)
    assert g.hop_distance(3, 3) == 0


def test_path_graph_distance():
    g = make_graph(3, [(0, 1), (1, 2)])
    assert g.hop_distance(0, 2) == 2


def test_hop_distance_matches_floyd_warshall():
    g = generate_topology("BA", 200, {"m": 2}, seed=1)
    fw = nx.floyd_warshall_numpy(to_nx(g))
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = (int(x) for x in rng.integers(200, size=2))
        assert g.hop_distance(a, b) == g.hop_distance(b, a) == int(fw[a, b])


def test_path_delay_follows_bfs_path():
    g = make_graph(4, [(0, 1), (1, 2), (2, 3)], delays={(0, 1): 2, (1, 2): 3, (2, 3): 4})
    assert g.path_delay(0, 3) == 9.0
    assert g.path_delay(3, 0) == 9.0


def test_triangle_inequality_on_sampled_triples():
    for kind in ("BA", "WS", "ER"):
        g = generate_topology(kind, 120, seed=11)
        rng = np.random.default_rng(2)
        for a, b, c in rng.integers(g.n, size=(1000, 3)):
            assert g.hop_distance(a, c) <= g.hop_distance(a, b) + g.hop_distance(b, c)


def test_neighborhood_star_center():
    g = make_graph(5, [(0, j) for j in range(1, 5)])
    assert g.neighborhood(0, 1) == [0, 1, 2, 3, 4]


def test_neighborhood_path():
    g = make_graph(4, [(0, 1), (1, 2), (2, 3)])
    assert g.neighborhood(0, 1) == [0, 1]
    assert g.neighborhood(1, 1) == [1, 0, 2]


def test_neighborhood_unlimited_excludes_cloud():
    g = generate_topology("WS", 200, {"k": 4, "beta": 0.1}, seed=42)
    for center in (0, 57, 198):
        nb = g.neighborhood(center, UNLIMITED)
        assert len(nb) == 199
        assert nb[0] == center
        assert g.cloud_ids[0] not in nb


def test_neighborhood_ordered_by_hops_then_id():
    g = generate_topology("ER", 80, seed=4)
    nb = g.neighborhood(10, 3)
    keys = [(g.hop_distance(10, j), j) for j in nb]
    assert keys == sorted(keys)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), center=st.integers(0, 38), h1=st.integers(1, 6), h2=st.integers(1, 6))
def test_neighborhood_nested_in_hop_bound(seed, center, h1, h2):
    g = generate_topology("BA", 40, {"m": 1}, seed=seed)
    lo, hi = sorted((h1, h2))
    assert set(g.neighborhood(center, lo)) <= set(g.neighborhood(center, hi))
    assert set(g.neighborhood(center, hi)) <= set(g.neighborhood(center, math.inf))


def test_nearest_cloud_by_delay():
    g = make_graph(4, [(0, 1), (1, 2), (0, 3)], delays={(0, 1): 1, (1, 2): 1, (0, 3): 50},
                   clouds=(2, 3))
    assert g.nearest_cloud(0) == 2


# -- capacities ------------------------------------------------------------

def test_single_cloud_gets_cloud_total():
    g = generate_topology("BA", 10, seed=0)
    g = assign_capacities(g, DEFAULT_FOG_TOTAL, (400, 500, 200))
    c = g.nodes[g.cloud_ids[0]]
    assert (c.cpu, c.mem, c.storage) == (400.0, 500.0, 200.0)


def test_uniform_split_four_fog_nodes():
    g = generate_topology("BA", 5, {"m": 1}, seed=0)
    g = assign_capacities(g, (704.0, 792.5, 313.5), DEFAULT_CLOUD_TOTAL)
    for j in g.fog_ids:
        nd = g.nodes[j]
        assert (nd.cpu, nd.mem, nd.storage) == (176.0, 198.125, 78.375)


def test_heterogeneous_split_sums_to_total():
    g = generate_topology("BA", 11, seed=0)
    g = assign_capacities(g, DEFAULT_FOG_TOTAL, DEFAULT_CLOUD_TOTAL, heterogeneity_seed=3,
                          mode="heterogeneous")
    caps = g.capacity_matrix()[g.fog_ids]
    assert len(g.fog_ids) == 10
    assert (caps > 0).all()
    assert len({round(c, 9) for c in caps[:, 0]}) > 1
    np.testing.assert_allclose(caps.sum(axis=0), DEFAULT_FOG_TOTAL, rtol=1e-9)


def test_multiple_clouds_split_evenly():
    g = generate_topology("BA", 12, seed=0, cloud_count=2)
    for k in g.cloud_ids:
        assert g.nodes[k].cpu == 200.0


def test_capacity_errors():
    g = generate_topology("BA", 6, seed=0)
    with pytest.raises(TopologyError):
        assign_capacities(g, (0, 1, 1), DEFAULT_CLOUD_TOTAL)
    with pytest.raises(TopologyError):
        assign_capacities(g, DEFAULT_FOG_TOTAL, DEFAULT_CLOUD_TOTAL, mode="weird")
    only_cloud = make_graph(2, [(0, 1)], clouds=(0, 1))
    with pytest.raises(TopologyError):
        assign_capacities(only_cloud, DEFAULT_FOG_TOTAL, DEFAULT_CLOUD_TOTAL)


# -- file round trip -------------------------------------------------------

@pytest.mark.parametrize("kind", ["BA", "WS", "ER"])
def test_round_trip_is_bit_exact(tmp_path, kind):
    g = generate_topology(kind, 60, seed=[9, 1])
    g = assign_capacities(g, DEFAULT_FOG_TOTAL, DEFAULT_CLOUD_TOTAL, 5, mode="heterogeneous")
    write_topology(g, tmp_path / "g.edges", tmp_path / "nodes.csv")
    back = read_topology(tmp_path / "g.edges", tmp_path / "nodes.csv")
    assert graphs_equal(g, back)
    assert back.kind == kind and back.seed == [9, 1]
    assert back.meta["bridges"] == g.meta["bridges"]
    write_topology(back, tmp_path / "h.edges", tmp_path / "nodes2.csv")
    assert (tmp_path / "g.edges").read_bytes() == (tmp_path / "h.edges").read_bytes()
    assert (tmp_path / "nodes.csv").read_bytes() == (tmp_path / "nodes2.csv").read_bytes()


def test_edge_file_format(tmp_path):
    g = make_graph(3, [(0, 1), (1, 2)], delays={(0, 1): 2.5, (1, 2): 3})
    write_topology(g, tmp_path / "e", tmp_path / "n")
    lines = (tmp_path / "e").read_text().splitlines()
    assert lines[1:] == ["0 1 2.5", "1 2 3.0"]
    assert (tmp_path / "n").read_text().splitlines()[0] == "id,layer,cpu,mem,storage"


def test_malformed_edge_file(tmp_path):
    (tmp_path / "e").write_text("0 1\n")
    (tmp_path / "n").write_text("id,layer,cpu,mem,storage\n0,fog,1,1,1\n1,fog,1,1,1\n")
    with pytest.raises(TopologyError, match=":1:"):
        read_topology(tmp_path / "e", tmp_path / "n")
