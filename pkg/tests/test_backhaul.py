import numpy as np
import pytest

from uwoc import backhaul
from uwoc.errors import ParameterError


def line(n=4):
    return [(i, i + 1) for i in range(n - 1)]


def ring(n=5):
    return [(i, (i + 1) % n) for i in range(n)]


def hex_cluster():
    edges = [(0, k) for k in range(1, 7)]
    edges += [(k, k % 6 + 1) for k in range(1, 7)]
    return edges


def random_connected(rng, n):
    nodes = list(range(n))
    rng.shuffle(nodes)
    edges = [(nodes[i], nodes[rng.integers(0, i)]) for i in range(1, n)]
    extra = rng.integers(0, n)
    for _ in range(int(extra)):
        a, b = rng.choice(n, size=2, replace=False)
        edges.append((int(a), int(b)))
    return edges


def floyd_warshall(nodes, edges):
    inf = float("inf")
    dist = {u: {v: (0 if u == v else inf) for v in nodes} for u in nodes}
    for a, b in edges:
        dist[a][b] = dist[b][a] = 1
    for k in nodes:
        for i in nodes:
            dik = dist[i][k]
            if dik == inf:
                continue
            row_k = dist[k]
            row_i = dist[i]
            for j in nodes:
                alt = dik + row_k[j]
                if alt < row_i[j]:
                    row_i[j] = alt
    return dist


def follow_route(net, src, dst, limit=None):
    limit = limit or len(net.nodes) + 1
    cur, hops = src, 0
    while cur != dst:
        node = net.nodes[cur]
        assert dst in node.rt, "no route %d -> %d" % (cur, dst)
        cur = node.port_peers[node.rt[dst]]
        hops += 1
        assert hops <= limit, "routing loop %d -> %d" % (src, dst)
    return hops


# ------------------------------------------------------------ discovery


def test_two_linked_nodes_learn_each_other():
    net = backhaul.Network([(7, 9)])
    net.hello_exchange()
    assert set(net.nodes[7].nt) == {9}
    assert set(net.nodes[9].nt) == {7}


def test_hex_cluster_center_sees_six_neighbors():
    net = backhaul.Network(hex_cluster())
    net.hello_exchange()
    assert len(net.nodes[0].nt) == 6
    for k in range(1, 7):
        assert len(net.nodes[k].nt) == 3  # center plus two ring peers


def test_nt_maps_neighbor_to_answering_port():
    net = backhaul.Network(line(3))
    net.hello_exchange()
    mid = net.nodes[1]
    for neigh, port in mid.nt.items():
        assert mid.port_peers[port] == neigh


# ------------------------------------------------------------- flooding


def test_line_flood_reaches_everyone_once():
    net = backhaul.Network(line(4))
    net.hello_exchange()
    packet = net.flood_nt(0)
    net.run()
    counts = net.processed_counts[packet.key]
    assert counts == {1: 1, 2: 1, 3: 1}
    assert net.flood_transmissions[packet.key] == 3


def test_ring_flood_terminates_under_edge_bound():
    net = backhaul.Network(ring(5))
    net.hello_exchange()
    packet = net.flood_nt(0)
    net.run()
    assert net.flood_transmissions[packet.key] <= 2 * len(net.edges)
    assert all(v == 1 for v in net.processed_counts[packet.key].values())


def test_flood_reaches_every_reachable_node():
    rng = np.random.default_rng(11)
    for _ in range(10):
        edges = random_connected(rng, 20)
        net = backhaul.Network(edges)
        net.converge()
        net.register_mu(0, "mu-a")
        net.run()
        # reachability oracle: plain traversal of the same edge list
        reach, stack = {0}, [0]
        adj = {}
        for a, b in net.edges:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in reach:
                    reach.add(v)
                    stack.append(v)
        for nid in reach:
            assert net.nodes[nid].mu_locations["mu-a"][1] == 0


# -------------------------------------------------------------- routing


def test_line_route_goes_through_middle():
    net = backhaul.Network(line(3))
    net.converge()
    a = net.nodes[0]
    assert a.port_peers[a.rt[2]] == 1


def test_complete_graph_routes_directly():
    nodes = range(5)
    edges = [(i, j) for i in nodes for j in nodes if i < j]
    net = backhaul.Network(edges)
    net.converge()
    for u in nodes:
        for v in nodes:
            if u != v:
                node = net.nodes[u]
                assert node.port_peers[node.rt[v]] == v


def test_equal_cost_tie_breaks_to_lowest_neighbor():
    # diamond: 0-1-3 and 0-2-3 both two hops
    net = backhaul.Network([(0, 1), (0, 2), (1, 3), (2, 3)])
    net.converge()
    src = net.nodes[0]
    assert src.port_peers[src.rt[3]] == 1


def test_routing_tables_match_all_pairs_oracle():
    rng = np.random.default_rng(23)
    for _ in range(12):
        n = int(rng.integers(5, 21))
        edges = random_connected(rng, n)
        net = backhaul.Network(edges)
        net.converge()
        dist = floyd_warshall(list(net.nodes), net.edges)
        for u in net.nodes:
            for v in net.nodes:
                if u == v:
                    continue
                assert follow_route(net, u, v) == dist[u][v]


# --------------------------------------------------------- registration


def test_centralized_registration_lands_after_feedback():
    net = backhaul.Network(line(3), mode="centralized")
    net.converge()
    net.register_mu(2, "diver")
    with pytest.raises(LookupError):
        net.onc_db.lookup("diver")  # feedback still in flight
    net.run()
    assert net.onc_db.lookup("diver") == 2


def test_centralized_handover_removes_stale_mapping():
    net = backhaul.Network(line(3), mode="centralized")
    net.converge()
    net.register_mu(2, "diver")
    net.run()
    net.register_mu(1, "diver")
    net.run()
    assert net.onc_db.lookup("diver") == 1
    assert "diver" not in net.nodes[2].mu_at
    assert net.replicas_agree("diver", 1)


def test_decentralized_handover_clears_all_replicas():
    net = backhaul.Network(hex_cluster())
    net.converge()
    net.register_mu(3, "uuv")
    net.run()
    net.register_mu(5, "uuv")
    net.run()
    assert net.replicas_agree("uuv", 5)
    assert "uuv" not in net.nodes[3].mu_at


def test_reregistration_is_silent():
    net = backhaul.Network(line(3))
    net.converge()
    assert net.register_mu(1, "mu") == {"mu": 1}
    net.run()
    before = len(net.trace)
    assert net.register_mu(1, "mu") == {}
    net.run()
    assert len(net.trace) == before


# ----------------------------------------------------------- forwarding


def test_forward_zero_hop_when_source_serves():
    net = backhaul.Network(line(3))
    net.converge()
    net.register_mu(0, "mu")
    net.run()
    report = net.forward_data(0, "mu")
    assert report.delivered and report.path == [0]


def test_forward_line_path():
    net = backhaul.Network(line(3))
    net.converge()
    net.register_mu(2, "mu")
    net.run()
    report = net.forward_data(0, "mu")
    assert report.delivered
    assert report.path == [0, 1, 2]


def test_forward_unknown_mu_fails_lookup():
    net = backhaul.Network(line(3))
    net.converge()
    with pytest.raises(LookupError):
        net.forward_data(0, "ghost")


def test_centralized_forwarding_relays_through_attachment():
    net = backhaul.Network(line(4), mode="centralized", onc_attachment=0)
    net.converge()
    net.register_mu(3, "mu")
    net.run()
    report = net.forward_data(2, "mu")
    assert report.delivered
    assert report.path == [2, 1, 0, 1, 2, 3]


def test_mid_handover_send_is_recorded_misdelivery():
    net = backhaul.Network(line(4))
    net.converge()
    net.register_mu(3, "mu")
    net.run()
    net.register_mu(0, "mu")  # flood toward node 3 is now in flight
    report = net.forward_data(2, "mu")  # node 2 still believes 3 serves
    assert not report.delivered
    assert report.misdelivered_at == 3
    assert any(ev[2] == "misdeliver" for ev in net.trace)
    # once quiet, views converge and sends succeed again
    report2 = net.forward_data(2, "mu")
    assert report2.delivered and report2.path == [2, 1, 0]


def test_random_sends_follow_shortest_paths():
    rng = np.random.default_rng(37)
    edges = random_connected(rng, 20)
    net = backhaul.Network(edges)
    net.converge()
    mus = ["mu-%d" % k for k in range(50)]
    homes = {}
    for mu in mus:
        home = int(rng.integers(0, 20))
        net.register_mu(home, mu)
        homes[mu] = home
    net.run()
    dist = floyd_warshall(list(net.nodes), net.edges)
    for _ in range(200):
        src = int(rng.integers(0, 20))
        mu = mus[int(rng.integers(0, 50))]
        report = net.forward_data(src, mu)
        assert report.delivered
        assert len(report.path) - 1 == dist[src][homes[mu]]


# ------------------------------------------------------------ plumbing


def test_trace_is_deterministic():
    def build():
        net = backhaul.Network(ring(6))
        net.converge()
        net.register_mu(2, "mu")
        net.run()
        net.forward_data(5, "mu")
        return net.trace_lines()

    assert build() == build()


def test_load_topology_parses_edge_list(tmp_path):
    p = tmp_path / "topo.txt"
    p.write_text("# backbone\n0 1\n1 2\n\n2 3  # spur\n")
    assert backhaul.load_topology(p) == [(0, 1), (1, 2), (2, 3)]


def test_network_validation():
    with pytest.raises(ParameterError):
        backhaul.Network([])
    with pytest.raises(ParameterError):
        backhaul.Network([(1, 1)])
    with pytest.raises(ParameterError):
        backhaul.Network(line(3), mode="sideways")
    with pytest.raises(ParameterError):
        backhaul.Network(line(3), onc_attachment=99)
