"""Discrete-event simulation of the base-station backhaul plane.

Nodes discover neighbors with Hello packets, flood their neighbor
tables, and run Dijkstra over the learned topology to fill routing
tables. Mobile-user registrations propagate either to a central
location database or, in the decentralized variant, to per-node
replicas via flooding. Data forwarding walks the routing tables hop by
hop, so a stale location view shows up as a recorded misdelivery
instead of being silently repaired.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .errors import ParameterError

__all__ = [
    "SignalingPacket",
    "ObtsNode",
    "OncDatabase",
    "DeliveryReport",
    "Network",
    "load_topology",
    "dijkstra_first_hops",
]

HELLO = "hello"
HELLO_REPLY = "hello-reply"
NT_BROADCAST = "nt-broadcast"
MU_AT_UPDATE = "mu-at-update"
DATA = "data"

_FLOODED = (NT_BROADCAST, MU_AT_UPDATE)


@dataclass(frozen=True)
class SignalingPacket:
    packet_type: str
    source_id: int
    packet_number: int
    payload: tuple = ()

    @property
    def key(self) -> tuple:
        return (self.source_id, self.packet_number)


@dataclass
class ObtsNode:
    """One base transceiver station on the backhaul."""

    node_id: int
    port_peers: List[int] = field(default_factory=list)
    mu_at: set = field(default_factory=set)           # served MU ids
    nt: Dict[int, int] = field(default_factory=dict)  # neighbor -> port
    rt: Dict[int, int] = field(default_factory=dict)  # dest -> port
    seen: set = field(default_factory=set)            # flood dedup keys
    topology: Dict[int, tuple] = field(default_factory=dict)
    # replicated MU map, mu -> (epoch, serving obts); epochs reject
    # late-arriving older floods
    mu_locations: Dict[int, tuple] = field(default_factory=dict)
    _next_number: int = 0

    def next_number(self) -> int:
        n = self._next_number
        self._next_number += 1
        return n

    def port_to(self, neighbor: int) -> int:
        return self.port_peers.index(neighbor)


class OncDatabase:
    """Central map from MU id to its serving station."""

    def __init__(self):
        self._map: Dict[int, tuple] = {}  # mu -> (epoch, obts)

    def assign(self, mu_id, obts_id: int, epoch: int) -> Optional[int]:
        """Record a registration; returns the displaced station, if any."""
        cur = self._map.get(mu_id)
        if cur is not None and cur[0] > epoch:
            return None
        self._map[mu_id] = (epoch, obts_id)
        if cur is not None and cur[1] != obts_id:
            return cur[1]
        return None

    def lookup(self, mu_id) -> int:
        if mu_id not in self._map:
            raise LookupError("MU %r is not registered" % (mu_id,))
        return self._map[mu_id][1]

    def as_dict(self) -> Dict:
        return {mu: obts for mu, (_, obts) in self._map.items()}


@dataclass
class DeliveryReport:
    path: List[int]
    delivered: bool = False
    misdelivered_at: Optional[int] = None


def load_topology(path) -> List[Tuple[int, int]]:
    """Edge list from a text file, one ``obts_id obts_id`` pair per line."""
    edges = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            a, b = line.split()
            edges.append((int(a), int(b)))
    return edges


def dijkstra_first_hops(adjacency: Dict[int, Sequence[int]],
                        source: int) -> Dict[int, int]:
    """First hop on a shortest hop-count path to every reachable node.

    Equal-cost ties resolve to the lowest first-hop neighbor id, so all
    nodes make reproducible choices from the same topology view.
    """
    dist = {source: 0}
    first: Dict[int, int] = {}
    heap = [(0, -1, source)]  # (distance, first hop, node)
    settled = set()
    while heap:
        d, fh, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u != source:
            first[u] = fh
        for v in sorted(adjacency.get(u, ())):
            if v in settled:
                continue
            nd = d + 1
            nfh = v if u == source else fh
            if v not in dist or (nd, nfh) < (dist[v], first.get(v, nfh)):
                dist[v] = nd
                first[v] = nfh
                heapq.heappush(heap, (nd, nfh, v))
    return first


class Network:
    """Event-driven backhaul over a fixed undirected topology.

    ``mode`` selects where location state lives: ``"centralized"``
    keeps one database co-located with the ``onc_attachment`` station;
    ``"decentralized"`` replicates the map at every node through
    floods. Events carry a deterministic total order (time, then
    insertion order), so runs are reproducible bit for bit.
    """

    def __init__(self, edges: Sequence[Tuple[int, int]],
                 mode: str = "decentralized", link_delay: float = 1.0,
                 onc_attachment: Optional[int] = None):
        if mode not in ("centralized", "decentralized"):
            raise ParameterError("mode must be centralized or "
                                 "decentralized")
        if link_delay <= 0:
            raise ParameterError("link_delay must be positive")
        self.mode = mode
        self.link_delay = float(link_delay)
        self.edges: List[Tuple[int, int]] = []
        adj: Dict[int, set] = {}
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ParameterError("self-loop on node %d" % a)
            if (a, b) in self.edges or (b, a) in self.edges:
                continue
            self.edges.append((a, b))
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        if not adj:
            raise ParameterError("topology has no edges")
        self.nodes: Dict[int, ObtsNode] = {
            nid: ObtsNode(node_id=nid, port_peers=sorted(peers))
            for nid, peers in sorted(adj.items())}
        self.onc_db = OncDatabase() if mode == "centralized" else None
        self.onc_attachment = (min(self.nodes) if onc_attachment is None
                               else int(onc_attachment))
        if self.onc_attachment not in self.nodes:
            raise ParameterError("ONC attachment %d is not a node"
                                 % self.onc_attachment)
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()
        self.trace: List[tuple] = []
        self._epochs = itertools.count(1)   # MU registration epochs
        self.true_serving: Dict = {}        # ground truth for the harness
        self.flood_transmissions: Dict[tuple, int] = {}
        self.processed_counts: Dict[tuple, Dict[int, int]] = {}

    # ------------------------------------------------------ event loop

    def schedule(self, delay: float, action: Callable) -> None:
        heapq.heappush(self._queue, (self.now + delay, next(self._seq),
                                     action))

    def run(self, until: Optional[float] = None) -> None:
        """Drain the queue, optionally stopping at a time horizon."""
        while self._queue:
            t, _, action = self._queue[0]
            if until is not None and t > until:
                break
            heapq.heappop(self._queue)
            self.now = t
            action()
        if until is not None and self.now < until:
            self.now = until

    def _record(self, node_id: int, event: str,
                packet: SignalingPacket) -> None:
        self.trace.append((self.now, node_id, event, packet.packet_type,
                           packet.source_id, packet.packet_number))

    def trace_lines(self) -> List[str]:
        return ["%g,%s,%s,%s,%s,%s" % row for row in self.trace]

    # ---------------------------------------------------- transmission

    def _send(self, node: ObtsNode, port: int,
              packet: SignalingPacket) -> None:
        peer = self.nodes[node.port_peers[port]]
        self._record(node.node_id, "send", packet)
        if packet.packet_type in _FLOODED:
            key = packet.key
            self.flood_transmissions[key] = \
                self.flood_transmissions.get(key, 0) + 1
        arrival_port = peer.port_to(node.node_id)

        def deliver():
            self._record(peer.node_id, "receive", packet)
            self._receive(peer, arrival_port, packet)

        self.schedule(self.link_delay, deliver)

    def _broadcast(self, node: ObtsNode, packet: SignalingPacket,
                   skip_port: Optional[int] = None) -> None:
        for port in range(len(node.port_peers)):
            if port != skip_port:
                self._send(node, port, packet)

    # -------------------------------------------------------- receive

    def _receive(self, node: ObtsNode, port: int,
                 packet: SignalingPacket) -> None:
        kind = packet.packet_type
        if kind == HELLO:
            reply = SignalingPacket(HELLO_REPLY, node.node_id,
                                    node.next_number())
            self._send(node, port, reply)
        elif kind == HELLO_REPLY:
            node.nt[packet.source_id] = port
        elif kind in _FLOODED:
            key = packet.key
            if key in node.seen:
                self._record(node.node_id, "drop-duplicate", packet)
                return
            node.seen.add(key)
            counts = self.processed_counts.setdefault(key, {})
            counts[node.node_id] = counts.get(node.node_id, 0) + 1
            self._apply_flood_payload(node, packet)
            self._broadcast(node, packet, skip_port=port)
        else:
            raise ParameterError("unexpected packet type %r" % kind)

    def _apply_flood_payload(self, node: ObtsNode,
                             packet: SignalingPacket) -> None:
        if packet.packet_type == NT_BROADCAST:
            origin, neighbors = packet.payload
            node.topology[origin] = tuple(neighbors)
        else:  # MU_AT_UPDATE
            mu_id, serving, epoch = packet.payload
            cur = node.mu_locations.get(mu_id)
            if cur is not None and cur[0] > epoch:
                return  # a newer registration already arrived here
            node.mu_locations[mu_id] = (epoch, serving)
            if serving != node.node_id:
                node.mu_at.discard(mu_id)

    # ------------------------------------------------ discovery phases

    def hello_exchange(self) -> None:
        """All nodes probe all ports; runs to quiescence to fill NTs."""
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            num = node.next_number()
            for port in range(len(node.port_peers)):
                self._send(node, port, SignalingPacket(HELLO, nid, num))
        self.run()

    def flood_nt(self, node_id: int) -> SignalingPacket:
        node = self.nodes[node_id]
        packet = SignalingPacket(
            NT_BROADCAST, node_id, node.next_number(),
            payload=(node_id, tuple(sorted(node.nt))))
        node.seen.add(packet.key)
        node.topology[node_id] = packet.payload[1]
        self._broadcast(node, packet)
        return packet

    def broadcast_neighbor_tables(self) -> None:
        """Every node floods its NT, then the network quiesces. Safe to
        call periodically; repeated floods carry fresh packet numbers."""
        for nid in sorted(self.nodes):
            self.flood_nt(nid)
        self.run()

    def compute_rt(self, node_id: int) -> Dict[int, int]:
        """Routing table from the node's learned topology view."""
        node = self.nodes[node_id]
        adjacency = {origin: list(neigh)
                     for origin, neigh in node.topology.items()}
        adjacency.setdefault(node_id, list(node.nt))
        first = dijkstra_first_hops(adjacency, node_id)
        node.rt = {dest: node.nt[fh] for dest, fh in first.items()
                   if fh in node.nt}
        return node.rt

    def converge(self) -> None:
        """One full discovery round: Hello, NT floods, RT computation."""
        self.hello_exchange()
        self.broadcast_neighbor_tables()
        for nid in self.nodes:
            self.compute_rt(nid)

    # ------------------------------------------------------- MU events

    def register_mu(self, obts_id: int, mu_id) -> Dict:
        """Attach an MU to a station and propagate the new mapping.

        Returns the association delta; a repeated registration at the
        same station is a no-op and emits no signaling.
        """
        node = self.nodes[obts_id]
        if mu_id in node.mu_at:
            return {}
        node.mu_at.add(mu_id)
        self.true_serving[mu_id] = obts_id
        epoch = next(self._epochs)
        node.mu_locations[mu_id] = (epoch, obts_id)
        update = SignalingPacket(MU_AT_UPDATE, obts_id,
                                 node.next_number(),
                                 payload=(mu_id, obts_id, epoch))
        self._record(obts_id, "register", update)
        if self.mode == "centralized":
            self._notify_onc(node, update)
        else:
            node.seen.add(update.key)
            self._broadcast(node, update)
        return {mu_id: obts_id}

    def _notify_onc(self, node: ObtsNode, update: SignalingPacket) -> None:
        mu_id, serving, epoch = update.payload

        def at_onc(_node: ObtsNode) -> None:
            displaced = self.onc_db.assign(mu_id, serving, epoch)
            if displaced is not None and displaced != serving:
                # tell the old station to drop its stale association
                evict = SignalingPacket(MU_AT_UPDATE,
                                        self.onc_attachment,
                                        self.nodes[self.onc_attachment]
                                        .next_number(),
                                        payload=(mu_id, serving, epoch))
                self._walk_route(self.nodes[self.onc_attachment],
                                 displaced, evict,
                                 lambda n: self._apply_flood_payload(
                                     n, evict))

        self._walk_route(node, self.onc_attachment, update, at_onc)

    # --------------------------------------------------- data delivery

    def lookup_mu(self, at_obts: int, mu_id) -> int:
        """Location view a sender at ``at_obts`` would consult."""
        if self.mode == "centralized":
            return self.onc_db.lookup(mu_id)
        node = self.nodes[at_obts]
        if mu_id not in node.mu_locations:
            raise LookupError("MU %r unknown at node %d"
                              % (mu_id, at_obts))
        return node.mu_locations[mu_id][1]

    def forward_data(self, src_obts: int, dst_mu) -> DeliveryReport:
        """Send one data packet toward an MU and report the path taken.

        Centralized mode relays through the database attachment point;
        decentralized mode trusts the sender's replica. Arrival at a
        station that is not the MU's current server is recorded as a
        misdelivery, which is what a stale location view costs.
        """
        src = self.nodes[src_obts]
        report = DeliveryReport(path=[src_obts])
        packet = SignalingPacket(DATA, src_obts, src.next_number(),
                                 payload=(dst_mu,))

        def finish(node: ObtsNode) -> None:
            if (dst_mu in node.mu_at and
                    self.true_serving.get(dst_mu) == node.node_id):
                report.delivered = True
                self._record(node.node_id, "deliver", packet)
            else:
                report.misdelivered_at = node.node_id
                self._record(node.node_id, "misdeliver", packet)

        if self.mode == "centralized":
            def at_onc(node: ObtsNode) -> None:
                serving = self.onc_db.lookup(dst_mu)
                self._walk_route(node, serving, packet, finish,
                                 report.path)

            self._walk_route(src, self.onc_attachment, packet, at_onc,
                             report.path)
        else:
            serving = self.lookup_mu(src_obts, dst_mu)
            self._walk_route(src, serving, packet, finish, report.path)
        self.run()
        return report

    def _walk_route(self, node: ObtsNode, dest: int,
                    packet: SignalingPacket, on_arrival: Callable,
                    path: Optional[list] = None) -> None:
        """Hop along routing tables toward ``dest``; the callback runs
        at the destination. Hops are scheduled events, so they
        interleave with any in-flight floods."""
        if node.node_id == dest:
            on_arrival(node)
            return
        if dest not in node.rt:
            raise LookupError("node %d has no route to %d"
                              % (node.node_id, dest))
        port = node.rt[dest]
        peer_id = node.port_peers[port]
        self._record(node.node_id, "send", packet)

        def hop():
            peer = self.nodes[peer_id]
            self._record(peer.node_id, "receive", packet)
            if path is not None and (not path or path[-1] != peer_id):
                path.append(peer_id)
            self._walk_route(peer, dest, packet, on_arrival, path)

        self.schedule(self.link_delay, hop)

    # ------------------------------------------------------ inspection

    def replicas_agree(self, mu_id, obts_id: int) -> bool:
        """True when every location view maps the MU to ``obts_id``."""
        if self.mode == "centralized":
            return self.onc_db.as_dict().get(mu_id) == obts_id
        return all(n.mu_locations.get(mu_id, (0, None))[1] == obts_id
                   for n in self.nodes.values())
