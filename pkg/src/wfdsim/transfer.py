"""Connection orchestration, the transport registry, and the application
facing send/receive interface with per-flow delivery reports.

The transport registry decouples the routing layer from the link model:
exactly one registered transport claims any given link.  Only the simulated
Wi-Fi Direct transport is functional; ZigBee and Bluetooth are registered
stubs that reject every send, present so the surface for additional
technologies exists and can be tested.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

from .engine import Engine, EventClass, EventKind, NodeId
from .linklayer import (BROADCAST, DeviceState, Frame, LinkLayer,
                        OutOfRangeError, InvalidStateError)
from .routing import (CONTROL_FRAME_BITS, Packet, RoutingAgent, TrafficClass)


class TransferError(Exception):
    pass


class RoleConflictError(TransferError):
    pass


class UnsupportedTransportError(TransferError):
    pass


class TransportId(Enum):
    WIFI_DIRECT_SIM = "WIFI_DIRECT_SIM"
    ZIGBEE = "ZIGBEE"
    BLUETOOTH = "BLUETOOTH"


@dataclass(frozen=True)
class TransportProfile:
    max_frame_bits: int
    per_bit_delay_ns: float


class Transport:
    """Interface to one wireless technology."""

    technology: TransportId
    profile: TransportProfile

    def claims_link(self, a: NodeId, b: NodeId) -> bool:
        raise NotImplementedError

    def claims_group(self, node: NodeId, group_id: int) -> bool:
        raise NotImplementedError

    def send_frame(self, frame: Frame) -> set[NodeId]:
        raise NotImplementedError


class WifiDirectSimTransport(Transport):
    technology = TransportId.WIFI_DIRECT_SIM
    profile = TransportProfile(max_frame_bits=1 << 30, per_bit_delay_ns=4.0)

    def __init__(self, linklayer: LinkLayer):
        self.linklayer = linklayer

    def claims_link(self, a: NodeId, b: NodeId) -> bool:
        return self.linklayer.unicast_group(a, b) is not None

    def claims_group(self, node: NodeId, group_id: int) -> bool:
        group = self.linklayer.groups.get(group_id)
        return group is not None and (group.owner == node
                                      or node in group.members())

    def send_frame(self, frame: Frame) -> set[NodeId]:
        return self.linklayer.deliver_frame(frame)


class StubTransport(Transport):
    """Registered but non-functional technology: claims no links and
    rejects every send."""

    profile = TransportProfile(max_frame_bits=0, per_bit_delay_ns=0.0)

    def __init__(self, technology: TransportId):
        self.technology = technology

    def claims_link(self, a: NodeId, b: NodeId) -> bool:
        return False

    def claims_group(self, node: NodeId, group_id: int) -> bool:
        return False

    def send_frame(self, frame: Frame) -> set[NodeId]:
        raise UnsupportedTransportError(
            f"{self.technology.value} transport is a stub")


class TransportRegistry:
    def __init__(self) -> None:
        self._transports: dict[TransportId, Transport] = {}

    def register(self, transport: Transport) -> None:
        self._transports[transport.technology] = transport

    def remove(self, technology: TransportId) -> None:
        self._transports.pop(technology, None)

    def get(self, technology: TransportId) -> Transport | None:
        return self._transports.get(technology)

    def for_link(self, a: NodeId, b: NodeId) -> Transport:
        for transport in self._transports.values():
            if transport.claims_link(a, b):
                return transport
        raise UnsupportedTransportError(f"no transport claims link {a}-{b}")

    def for_group(self, node: NodeId, group_id: int) -> Transport:
        for transport in self._transports.values():
            if transport.claims_group(node, group_id):
                return transport
        raise UnsupportedTransportError(
            f"no transport claims group {group_id} for {node}")


class ConnectionState(Enum):
    CONNECTING = "CONNECTING"
    UP = "UP"
    CLOSED = "CLOSED"


@dataclass
class Connection:
    local: NodeId
    peer: NodeId
    transport: TransportId
    state: ConnectionState = ConnectionState.CONNECTING
    reason: str = ""


class DeliveryOutcome(Enum):
    DELIVERED = "DELIVERED"
    NO_ROUTE = "NO_ROUTE"
    TTL_EXPIRED = "TTL_EXPIRED"
    LOST = "LOST"


@dataclass
class DeliveryReport:
    app_seq: int
    src: NodeId
    dst: NodeId
    outcome: DeliveryOutcome
    path: list[NodeId]
    latency_us: int | None


@dataclass
class _PendingFlow:
    src: NodeId
    dst: NodeId
    sent_at: int
    timeout_handle: object


DEDUP_WINDOW = 1024
REPORT_TIMEOUT_US = 30_000_000


class TransferLayer:
    """Per-simulation transfer plane: wraps packets in frames, dispatches
    arrivals up to the routing agents, maintains per-node inboxes with a
    (src, app_seq) de-duplication window, and tracks per-flow outcomes."""

    def __init__(self, engine: Engine, linklayer: LinkLayer,
                 registry: TransportRegistry | None = None):
        self.engine = engine
        self.linklayer = linklayer
        self.registry = registry or TransportRegistry()
        if self.registry.get(TransportId.WIFI_DIRECT_SIM) is None:
            self.registry.register(WifiDirectSimTransport(linklayer))
            self.registry.register(StubTransport(TransportId.ZIGBEE))
            self.registry.register(StubTransport(TransportId.BLUETOOTH))
        self.agents: dict[NodeId, RoutingAgent] = {}
        self.connections: list[Connection] = []
        self._inboxes: dict[NodeId, list[tuple[NodeId, int, int]]] = {}
        self._dedup: dict[NodeId, tuple[deque, set]] = {}
        self._next_app_seq = 0
        self._pending: dict[int, _PendingFlow] = {}
        self.reports: dict[int, DeliveryReport] = {}
        engine.on(EventKind.APP_SEND, self._on_app_send)
        linklayer.on_frame_lost(self._on_frame_lost)
        linklayer.on_link_up(self._on_link_up)
        linklayer.on_link_down(self._on_link_down)

    def attach_agent(self, agent: RoutingAgent) -> None:
        node = agent.node
        self.agents[node] = agent
        agent.transfer = self
        self._inboxes[node] = []
        self._dedup[node] = (deque(), set())
        self.linklayer.set_receiver(node, lambda frame, n=node:
                                    self._on_frame(n, frame))

    # ------------------------------------------------------------------
    # connection management

    def connect(self, local: NodeId, peer: NodeId) -> Connection:
        """Compose whatever link-layer flow the endpoint roles require:
        discovery + GO negotiation for two idle nodes, a join when one side
        already owns a group, a bridge when both do."""
        if local == peer:
            raise ValueError("cannot connect a node to itself")
        if not self.topology_in_range(local, peer):
            raise OutOfRangeError(f"{local} and {peer} are out of range")
        ll = self.linklayer
        ls, ps = ll.state(local), ll.state(peer)

        if ls is DeviceState.GROUP_CLIENT:
            group = ll.client_group(local)
            if group.owner == peer:
                return self._track(local, peer, ConnectionState.UP)
            raise RoleConflictError(
                f"{local} is a group client and may only talk to {group.owner}")
        if ps is DeviceState.GROUP_CLIENT:
            group = ll.client_group(peer)
            if group.owner == local:
                return self._track(local, peer, ConnectionState.UP)
            raise RoleConflictError(
                f"{peer} is a group client and may only talk to {group.owner}")

        busy = (DeviceState.SCAN, DeviceState.FIND_SEARCH,
                DeviceState.FIND_LISTEN, DeviceState.NEGOTIATING)
        if ls in busy or ps in busy:
            raise InvalidStateError(f"{local} or {peer} is busy")

        conn = self._track(local, peer, ConnectionState.CONNECTING)
        self.engine.log(local, EventClass.CONNECT, action="request", peer=peer)

        if ls is DeviceState.GROUP_OWNER and ps is DeviceState.GROUP_OWNER:
            group = ll.owned_group(peer)
            self.engine.call_later(ll.config.wps_us, lambda:
                                   self._finish_bridge(conn, group))
        elif ps is DeviceState.GROUP_OWNER:
            group = ll.owned_group(peer)
            self.engine.call_later(ll.config.wps_us, lambda:
                                   self._finish_join(conn, local, group))
        elif ls is DeviceState.GROUP_OWNER:
            group = ll.owned_group(local)
            self.engine.call_later(ll.config.wps_us, lambda:
                                   self._finish_join(conn, peer, group))
        else:
            self._discover_then_negotiate(conn)
        return conn

    def _track(self, local, peer, state) -> Connection:
        conn = Connection(local, peer, TransportId.WIFI_DIRECT_SIM, state)
        self.connections.append(conn)
        if state is ConnectionState.UP:
            self.engine.log(local, EventClass.CONNECT, action="up", peer=peer)
        return conn

    def _conn_up(self, conn: Connection) -> None:
        conn.state = ConnectionState.UP
        self.engine.log(conn.local, EventClass.CONNECT, action="up",
                        peer=conn.peer)

    def _conn_failed(self, conn: Connection, reason: str) -> None:
        conn.state = ConnectionState.CLOSED
        conn.reason = reason
        self.engine.log(conn.local, EventClass.CONNECT, action="failed",
                        peer=conn.peer, reason=reason)

    def _finish_bridge(self, conn: Connection, group) -> None:
        try:
            self.linklayer.bridge_attach(conn.local, group)
        except Exception as exc:  # policy, role or range changed meanwhile
            self._conn_failed(conn, type(exc).__name__)
            return
        self._conn_up(conn)

    def _finish_join(self, conn: Connection, client: NodeId, group) -> None:
        try:
            self.linklayer.join_group(client, group)
        except Exception as exc:
            self._conn_failed(conn, type(exc).__name__)
            return
        self._conn_up(conn)

    def _discover_then_negotiate(self, conn: Connection) -> None:
        ll = self.linklayer
        local, peer = conn.local, conn.peer
        state = {"negotiated": False}

        def maybe_negotiate(node, discovered):
            if state["negotiated"]:
                return
            if peer in ll.discovered(local) and local in ll.discovered(peer):
                state["negotiated"] = True
                ll.negotiate_go(local, peer,
                                on_complete=lambda group: self._conn_up(conn),
                                on_failed=lambda i, r, reason:
                                self._conn_failed(conn, reason))

        def on_timeout(node):
            if not state["negotiated"]:
                self._conn_failed(conn, "discovery_timeout")

        ll.start_discovery(local, target=peer, on_found=maybe_negotiate,
                           on_timeout=on_timeout)
        ll.start_discovery(peer, target=local, on_found=maybe_negotiate,
                           on_timeout=on_timeout)

    def topology_in_range(self, a: NodeId, b: NodeId) -> bool:
        return self.linklayer.topology.in_range(a, b)

    def _on_link_up(self, a: NodeId, b: NodeId) -> None:
        for node, peer in ((a, b), (b, a)):
            agent = self.agents.get(node)
            if agent is not None:
                agent.on_link_up(peer)

    def _on_link_down(self, a: NodeId, b: NodeId) -> None:
        for node, peer in ((a, b), (b, a)):
            agent = self.agents.get(node)
            if agent is not None:
                agent.on_link_down(peer)
        for conn in self.connections:
            if conn.state is ConnectionState.UP and \
                    {conn.local, conn.peer} == {a, b}:
                conn.state = ConnectionState.CLOSED
                conn.reason = "link_down"

    # ------------------------------------------------------------------
    # frame plane

    def link_peers(self, node: NodeId) -> set[NodeId]:
        return self.linklayer.peers(node)

    def broadcast_control(self, node: NodeId, msg) -> set[NodeId]:
        """One-hop broadcast of a control message into every group context
        of the node; returns the union of intended recipients."""
        reached: set[NodeId] = set()
        groups = []
        owned = self.linklayer.owned_group(node)
        if owned is not None:
            groups.append(owned)
        client = self.linklayer.client_group(node)
        if client is not None:
            groups.append(client)
        groups += self.linklayer.bridge_groups(node)
        for group in groups:
            frame = Frame(node, BROADCAST, group.group_id, CONTROL_FRAME_BITS,
                          msg)
            try:
                transport = self.registry.for_group(node, group.group_id)
                reached |= transport.send_frame(frame)
            except UnsupportedTransportError:
                self.engine.log(node, EventClass.DROP, reason="unsupported",
                                group=group.group_id)
        return reached

    def send_control(self, node: NodeId, peer: NodeId, msg) -> bool:
        return self._send_frame(node, peer, CONTROL_FRAME_BITS, msg)

    def send_data(self, node: NodeId, pkt: Packet, next_hop: NodeId) -> bool:
        """Wrap a routed packet in a frame toward next_hop.  A dead link is
        reported upward so the routing layer can invalidate immediately."""
        return self._send_frame(node, next_hop, pkt.payload_bits, pkt)

    def _send_frame(self, node: NodeId, peer: NodeId, size_bits: int,
                    payload) -> bool:
        group = self.linklayer.unicast_group(node, peer)
        if group is None:
            self.engine.log(node, EventClass.DROP, reason="lost", dst=peer,
                            detail="no_link")
            self._report_loss(node, peer, payload)
            return False
        frame = Frame(node, peer, group.group_id, size_bits, payload)
        try:
            transport = self.registry.for_link(node, peer)
            transport.send_frame(frame)
        except UnsupportedTransportError:
            self.engine.log(node, EventClass.DROP, reason="unsupported",
                            dst=peer)
            return False
        return True

    def _on_frame(self, node: NodeId, frame: Frame) -> None:
        agent = self.agents[node]
        if isinstance(frame.payload, Packet):
            agent.forward(frame.payload)
        else:
            agent.handle_control(frame.payload, frame.sent_at)

    def _on_frame_lost(self, src: NodeId, dst: NodeId, frame: Frame) -> None:
        self._report_loss(src, dst, frame.payload)

    def _report_loss(self, src: NodeId, dst: NodeId, payload) -> None:
        agent = self.agents.get(src)
        if agent is not None:
            agent.invalidate_neighbor(dst)
        if isinstance(payload, Packet):
            self._finalize(payload.app_seq, DeliveryOutcome.LOST)

    # ------------------------------------------------------------------
    # application interface

    def app_send(self, src: NodeId, dst: NodeId, payload_bits: int,
                 traffic_class: TrafficClass = TrafficClass.REAL_TIME,
                 ttl: int | None = None) -> int:
        if src not in self.agents:
            raise KeyError(f"unknown node {src!r}")
        app_seq = self._next_app_seq
        self._next_app_seq += 1
        if dst == src:
            pkt = Packet(src, dst, app_seq, 0, traffic_class, payload_bits)
            self._pending[app_seq] = _PendingFlow(src, dst, self.engine.now(),
                                                  None)
            self.deliver_local(src, pkt)
            return app_seq
        ttl = ttl if ttl is not None else self.agents[src].config.default_ttl
        pkt = Packet(src, dst, app_seq, ttl, traffic_class, payload_bits)
        handle = self.engine.call_later(
            REPORT_TIMEOUT_US,
            lambda: self._finalize(app_seq, DeliveryOutcome.LOST), src)
        self._pending[app_seq] = _PendingFlow(src, dst, self.engine.now(),
                                              handle)
        self.engine.schedule(0, EventKind.APP_SEND, src, pkt)
        return app_seq

    def _on_app_send(self, event) -> None:
        self.agents[event.target].forward(event.payload)

    def deliver_local(self, node: NodeId, pkt: Packet) -> None:
        window, seen = self._dedup[node]
        key = (pkt.src, pkt.app_seq)
        if key in seen:
            self.engine.log(node, EventClass.DROP, reason="duplicate",
                            src=pkt.src, app_seq=pkt.app_seq)
            return
        window.append(key)
        seen.add(key)
        if len(window) > DEDUP_WINDOW:
            seen.discard(window.popleft())
        self._inboxes[node].append((pkt.src, pkt.payload_bits, pkt.app_seq))
        self.engine.log(node, EventClass.DELIVER, src=pkt.src,
                        app_seq=pkt.app_seq, cls=pkt.traffic_class,
                        bits=pkt.payload_bits)
        self._finalize(pkt.app_seq, DeliveryOutcome.DELIVERED)

    def app_receive(self, node: NodeId) -> list[tuple[NodeId, int, int]]:
        """Everything delivered to this node so far: (src, payload_bits,
        app_seq) in delivery order."""
        return list(self._inboxes[node])

    # ------------------------------------------------------------------
    # delivery reports

    def notify_drop(self, app_seq: int, reason: str) -> None:
        outcome = {"ttl_expired": DeliveryOutcome.TTL_EXPIRED,
                   "no_route": DeliveryOutcome.NO_ROUTE,
                   "lost": DeliveryOutcome.LOST}[reason]
        self._finalize(app_seq, outcome)

    def notify_route_error(self, node: NodeId, app_seq: int,
                           unreachable: NodeId) -> None:
        self._finalize(app_seq, DeliveryOutcome.NO_ROUTE)

    def _finalize(self, app_seq: int, outcome: DeliveryOutcome) -> None:
        flow = self._pending.pop(app_seq, None)
        if flow is None:
            return  # already terminal (e.g. duplicate delivery)
        if flow.timeout_handle is not None:
            flow.timeout_handle.cancel()
        path: list[NodeId] = []
        latency: int | None = None
        if outcome is DeliveryOutcome.DELIVERED:
            path = self._path_from_trace(flow, app_seq)
            latency = self.engine.now() - flow.sent_at
        self.reports[app_seq] = DeliveryReport(app_seq, flow.src, flow.dst,
                                               outcome, path, latency)

    def _path_from_trace(self, flow: _PendingFlow, app_seq: int) -> list[NodeId]:
        if flow.src == flow.dst:
            return [flow.src]
        path = []
        for record in self.engine.trace.records:
            details = dict(record.details)
            if record.event_class is EventClass.FORWARD and \
                    details.get("app_seq") == app_seq and \
                    details.get("src") == flow.src:
                path.append(record.node)
        path.append(flow.dst)
        return path

    def report(self, app_seq: int) -> DeliveryReport | None:
        return self.reports.get(app_seq)
