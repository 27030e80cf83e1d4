"""Multi-hop routing layer over the link model: neighbor discovery, periodic
change-only table broadcast, QoS route selection and hop-by-hop forwarding.

The table protocol is destination-sequenced distance vector: every node
originates an even sequence number for itself; routes are adopted on fresher
sequence first, then fewer hops, then lower latency.  Invalidations carry an
odd sequence (origin's last even + 1) and infinite hops, so a re-discovered
destination overrides them with its next even announcement.

A table stores up to two candidates per destination: the primary plus one
alternate with equal sequence number *and equal hop count* learned via a
different neighbor.  Class-based selection (minimum latency for real-time
traffic, minimum energy for bulk) operates over these candidates; the equal
hop count requirement keeps every candidate strictly closer to the
destination, which is what makes per-hop class selection loop-free once
tables have converged.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .engine import Engine, EventClass, NodeId

INFINITE_HOPS = 1 << 16
CONTROL_FRAME_BITS = 1024  # wire size of discovery/advert/error frames


class RoutingError(Exception):
    pass


class NoRouteError(RoutingError):
    pass


class NoLinkError(RoutingError):
    pass


class TrafficClass(Enum):
    REAL_TIME = "REAL_TIME"  # minimize path latency
    BULK = "BULK"            # minimize path energy


@dataclass
class Packet:
    src: NodeId
    dst: NodeId
    app_seq: int
    ttl: int
    traffic_class: TrafficClass
    payload_bits: int

    def __post_init__(self):
        if self.ttl < 0:
            raise ValueError("ttl must be non-negative")
        if self.payload_bits < 0:
            raise ValueError("payload_bits must be non-negative")


@dataclass
class RoutingEntry:
    destination: NodeId
    next_hop: NodeId
    hop_count: int
    seq_no: int
    latency_us: int
    energy_cost: float
    last_updated: int

    @property
    def valid(self) -> bool:
        return self.hop_count < INFINITE_HOPS


@dataclass(frozen=True)
class AdvertEntry:
    dest: NodeId
    seq_no: int
    hop_count: int
    latency_us: int
    energy_cost: float


@dataclass
class TableAdvert:
    sender: NodeId
    sender_cost: float
    entries: list[AdvertEntry]
    full_dump: bool


@dataclass
class DiscoveryRequest:
    sender: NodeId
    sent_at: int


@dataclass
class DiscoveryResponse:
    sender: NodeId
    requester: NodeId
    seq_no: int
    energy_cost: float
    echo_us: int


@dataclass
class RouteErrorNotice:
    orig_src: NodeId
    unreachable: NodeId
    app_seq: int
    hops_left: int = 16


@dataclass
class LinkMetrics:
    latency_us: int
    energy_cost: float  # relay cost of the peer at the far end


class RoutingTable:
    """Per-node table: destination -> up to two candidate entries, primary
    first.  Never holds an entry for its owner.  The dirty set tracks
    destinations whose advertised route changed since the last advert."""

    MAX_CANDIDATES = 2

    def __init__(self, owner: NodeId):
        self.owner = owner
        self.entries: dict[NodeId, list[RoutingEntry]] = {}
        self.self_seq = 0
        self.dirty: set[NodeId] = set()

    def primary(self, dst: NodeId) -> RoutingEntry | None:
        slots = self.entries.get(dst)
        return slots[0] if slots else None

    def candidates(self, dst: NodeId) -> list[RoutingEntry]:
        return list(self.entries.get(dst, ()))

    def destinations(self) -> list[NodeId]:
        return sorted(self.entries)

    def valid_destinations(self) -> list[NodeId]:
        return sorted(d for d, slots in self.entries.items() if slots[0].valid)

    def snapshot(self) -> dict[NodeId, tuple[NodeId, int, int]]:
        """dest -> (next_hop, hop_count, seq_no) of the primary, valid only."""
        return {d: (s[0].next_hop, s[0].hop_count, s[0].seq_no)
                for d, s in self.entries.items() if s[0].valid}


def _route_fields(entry: RoutingEntry) -> tuple:
    # the advertised identity of a route; seq-only refreshes are not changes
    return (entry.next_hop, entry.hop_count, entry.latency_us,
            entry.energy_cost, entry.valid)


def merge_advert(table: RoutingTable, advert: TableAdvert, link: LinkMetrics,
                 now: int) -> set[NodeId]:
    """Fold a neighbor's advert into the table.

    For each advertised destination the candidate route goes via the sender
    with one extra hop and the link's latency/energy added.  Adoption is
    freshness-first: strictly newer sequence wins outright; an equal sequence
    wins only by fewer hops, then lower latency.  Equal-sequence equal-hop
    candidates via a different neighbor are kept as alternates.  Returns the
    set of destinations whose advertised route changed (these also enter the
    dirty set).
    """
    changed: set[NodeId] = set()
    for adv in advert.entries:
        if adv.dest == table.owner:
            continue
        if adv.hop_count >= INFINITE_HOPS:
            cand = RoutingEntry(adv.dest, advert.sender, INFINITE_HOPS,
                                adv.seq_no, 0, 0.0, now)
        else:
            cand = RoutingEntry(adv.dest, advert.sender,
                                adv.hop_count + 1, adv.seq_no,
                                adv.latency_us + link.latency_us,
                                adv.energy_cost + link.energy_cost, now)
        if _consider(table, cand):
            changed.add(adv.dest)
    table.dirty |= changed
    return changed


def _consider(table: RoutingTable, cand: RoutingEntry) -> bool:
    slots = table.entries.get(cand.destination)
    if not slots:
        if not cand.valid:
            return False  # nothing to invalidate
        table.entries[cand.destination] = [cand]
        return True
    primary = slots[0]
    if cand.seq_no > primary.seq_no:
        old = _route_fields(primary)
        table.entries[cand.destination] = [cand]
        return _route_fields(cand) != old
    if cand.seq_no < primary.seq_no:
        return False
    # equal sequence
    if not cand.valid:
        return False
    if not primary.valid:
        return False  # even == odd cannot happen; defensive
    if (cand.hop_count, cand.latency_us) < (primary.hop_count, primary.latency_us):
        old = _route_fields(primary)
        slots = [cand]
        if (primary.next_hop != cand.next_hop
                and primary.hop_count == cand.hop_count):
            slots.append(primary)
        table.entries[cand.destination] = slots
        return _route_fields(cand) != old
    if cand.next_hop == primary.next_hop:
        old = _route_fields(primary)
        slots[0] = cand
        return _route_fields(cand) != old
    # alternate candidacy: equal seq, equal hops, different neighbor
    if cand.hop_count != primary.hop_count:
        return False
    for i, alt in enumerate(slots[1:], start=1):
        if alt.next_hop == cand.next_hop:
            slots[i] = cand
            return False
    if len(slots) < RoutingTable.MAX_CANDIDATES:
        slots.append(cand)
    else:
        worst = max(range(1, len(slots)),
                    key=lambda i: (slots[i].latency_us, slots[i].next_hop))
        if (cand.latency_us, cand.next_hop) < (slots[worst].latency_us,
                                               slots[worst].next_hop):
            slots[worst] = cand
    return False


def _wire_entries(entries: list[AdvertEntry]) -> str:
    """Serialize advert entries for the trace: dest:seq:hops:lat_us:energy,
    joined by commas; '-' for an empty advert."""
    if not entries:
        return "-"
    return ",".join(
        f"{e.dest}:{e.seq_no}:{e.hop_count}:{e.latency_us}:{e.energy_cost:g}"
        for e in entries)


def select_route(table: RoutingTable, dst: NodeId,
                 traffic_class: TrafficClass) -> NodeId:
    """Pick the next hop for dst per class policy: REAL_TIME minimizes
    latency, BULK minimizes energy; ties break by hop count then lowest
    next-hop id.  Raises NoRouteError when no valid candidate exists."""
    candidates = [e for e in table.candidates(dst) if e.valid]
    if not candidates:
        raise NoRouteError(f"{table.owner}: no route to {dst}")
    if traffic_class is TrafficClass.BULK:
        best = min(candidates,
                   key=lambda e: (e.energy_cost, e.hop_count, e.next_hop))
    else:
        best = min(candidates,
                   key=lambda e: (e.latency_us, e.hop_count, e.next_hop))
    return best.next_hop


@dataclass
class RoutingConfig:
    advert_period_us: int = 1_000_000
    full_dump_every: int = 10
    default_ttl: int = 16


class RoutingAgent:
    """The per-node routing brain: owns the table, reacts to link events,
    emits periodic adverts, selects routes and forwards packets.  All frame
    I/O goes through the transfer layer attached after construction."""

    def __init__(self, node: NodeId, engine: Engine, energy_cost: float,
                 config: RoutingConfig | None = None):
        self.node = node
        self.engine = engine
        self.energy_cost = energy_cost
        self.config = config or RoutingConfig()
        self.table = RoutingTable(node)
        self.link_metrics: dict[NodeId, LinkMetrics] = {}
        self.tick_count = 0
        self.transfer = None  # wired by the simulation

    # ------------------------------------------------------------------
    # link events

    def on_link_up(self, peer: NodeId) -> None:
        # a fresh neighbor has none of our state: requeue the whole table so
        # the next incremental advert brings it up to date within one period
        self.table.dirty |= set(self.table.entries)
        self.broadcast_discovery_request()

    def on_link_down(self, peer: NodeId) -> None:
        self.invalidate_neighbor(peer)

    # ------------------------------------------------------------------
    # neighbor discovery (request/response over one hop)

    def broadcast_discovery_request(self) -> None:
        if not self.transfer.link_peers(self.node):
            raise NoLinkError(f"{self.node} has no link-layer peers")
        msg = DiscoveryRequest(self.node, self.engine.now())
        recipients = self.transfer.broadcast_control(self.node, msg)
        self.engine.log(self.node, EventClass.DISCOVERY, action="req",
                        reached=len(recipients))

    def _on_discovery_request(self, msg: DiscoveryRequest) -> None:
        # answering is an announcement of self: bump the even sequence so a
        # re-established neighbor always beats any odd invalidation of us.
        # The response is broadcast, not unicast, so every current neighbor
        # refreshes our sequence at the same instant; otherwise one neighbor
        # would hold a fresher sequence than the rest and freshness-first
        # merging could later prefer its longer route over a shorter one.
        self.table.self_seq += 2
        resp = DiscoveryResponse(self.node, msg.sender, self.table.self_seq,
                                 self.energy_cost, msg.sent_at)
        self.transfer.broadcast_control(self.node, resp)

    def _on_discovery_response(self, resp: DiscoveryResponse,
                               sent_at: int) -> None:
        now = self.engine.now()
        if resp.requester == self.node:
            # round trip measured against our own request, halved
            latency = (now - resp.echo_us) // 2
        else:
            # overheard announcement: the frame's one-way transit
            latency = now - sent_at
        link = LinkMetrics(latency, resp.energy_cost)
        self.link_metrics[resp.sender] = link
        self_entry = AdvertEntry(resp.sender, resp.seq_no, 0, 0, 0.0)
        advert = TableAdvert(resp.sender, resp.energy_cost, [self_entry], False)
        changed = merge_advert(self.table, advert, link, now)
        self.engine.log(self.node, EventClass.DISCOVERY, action="resp",
                        peer=resp.sender, seq=resp.seq_no,
                        lat_us=link.latency_us, energy=resp.energy_cost,
                        changed=sorted(changed) or "-")

    # ------------------------------------------------------------------
    # periodic table adverts

    def advert_tick(self) -> None:
        self.tick_count += 1
        full = self.tick_count % self.config.full_dump_every == 0
        if full:
            self.table.self_seq += 2
            entries = [AdvertEntry(self.node, self.table.self_seq, 0, 0, 0.0)]
            entries += [self._advert_entry(d) for d in self.table.destinations()]
        elif self.table.dirty:
            entries = [self._advert_entry(d)
                       for d in sorted(self.table.dirty)
                       if d in self.table.entries]
        else:
            return
        advert = TableAdvert(self.node, self.energy_cost, entries, full)
        recipients = self.transfer.broadcast_control(self.node, advert)
        if not recipients:
            return  # nobody heard it; keep the dirty set for the next tick
        self.table.dirty.clear()
        self.engine.log(self.node, EventClass.ADVERT, action="tx",
                        full=full, n=len(entries), cost=self.energy_cost,
                        entries=_wire_entries(entries))

    def _advert_entry(self, dst: NodeId) -> AdvertEntry:
        e = self.table.entries[dst][0]
        if not e.valid:
            return AdvertEntry(dst, e.seq_no, INFINITE_HOPS, 0, 0.0)
        return AdvertEntry(dst, e.seq_no, e.hop_count, e.latency_us,
                           e.energy_cost)

    def _on_advert(self, advert: TableAdvert, sent_at: int) -> None:
        now = self.engine.now()
        if advert.sender not in self.transfer.link_peers(self.node):
            self.engine.log(self.node, EventClass.DROP, reason="non_neighbor",
                            src=advert.sender)
            return
        link = self.link_metrics.get(advert.sender)
        if link is None or advert.full_dump:
            # full dumps refresh the link estimate from the frame's measured
            # one-way transit (symmetric links: equals half the round trip)
            link = LinkMetrics(now - sent_at, advert.sender_cost)
            self.link_metrics[advert.sender] = link
        changed = merge_advert(self.table, advert, link, now)
        if changed:
            self.engine.log(self.node, EventClass.ADVERT, action="rx",
                            sender=advert.sender, changed=sorted(changed))

    # ------------------------------------------------------------------
    # invalidation

    def invalidate_neighbor(self, lost_peer: NodeId) -> set[NodeId]:
        """Mark every route through lost_peer unusable.  A surviving
        equal-sequence alternate via another neighbor is promoted instead of
        invalidated; destinations with no survivor get an odd sequence and
        infinite hops, which adverts then propagate."""
        self.link_metrics.pop(lost_peer, None)
        now = self.engine.now()
        changed: set[NodeId] = set()
        for dst in self.table.destinations():
            slots = self.table.entries[dst]
            primary = slots[0]
            survivors = [e for e in slots if e.next_hop != lost_peer]
            if primary.next_hop != lost_peer:
                if len(survivors) != len(slots):
                    self.table.entries[dst] = survivors  # dropped an alternate
                continue
            if not primary.valid:
                continue
            if survivors:
                self.table.entries[dst] = survivors
            else:
                self.table.entries[dst] = [RoutingEntry(
                    dst, lost_peer, INFINITE_HOPS, primary.seq_no + 1,
                    0, 0.0, now)]
            changed.add(dst)
        self.table.dirty |= changed
        return changed

    # ------------------------------------------------------------------
    # forwarding

    def select_route(self, dst: NodeId, traffic_class: TrafficClass) -> NodeId:
        return select_route(self.table, dst, traffic_class)

    def forward(self, pkt: Packet) -> None:
        if pkt.dst == self.node:
            self.transfer.deliver_local(self.node, pkt)
            return
        pkt.ttl -= 1
        if pkt.ttl <= 0:
            self.engine.log(self.node, EventClass.DROP, reason="ttl_expired",
                            src=pkt.src, dst=pkt.dst, app_seq=pkt.app_seq)
            self.transfer.notify_drop(pkt.app_seq, "ttl_expired")
            return
        try:
            next_hop = self.select_route(pkt.dst, pkt.traffic_class)
        except NoRouteError:
            self.engine.log(self.node, EventClass.DROP, reason="no_route",
                            src=pkt.src, dst=pkt.dst, app_seq=pkt.app_seq)
            self.transfer.notify_drop(pkt.app_seq, "no_route")
            self._send_route_error(pkt)
            return
        self.engine.log(self.node, EventClass.FORWARD, src=pkt.src,
                        dst=pkt.dst, app_seq=pkt.app_seq, ttl=pkt.ttl,
                        next=next_hop, cls=pkt.traffic_class,
                        bits=pkt.payload_bits)
        self.transfer.send_data(self.node, pkt, next_hop)

    def _send_route_error(self, pkt: Packet) -> None:
        if pkt.src == self.node:
            self.transfer.notify_route_error(self.node, pkt.app_seq, pkt.dst)
            return
        notice = RouteErrorNotice(pkt.src, pkt.dst, pkt.app_seq)
        self._relay_route_error(notice)

    def _relay_route_error(self, notice: RouteErrorNotice) -> None:
        if notice.hops_left <= 0:
            return
        notice.hops_left -= 1
        try:
            next_hop = self.select_route(notice.orig_src, TrafficClass.REAL_TIME)
        except NoRouteError:
            return  # best effort only
        self.transfer.send_control(self.node, next_hop, notice)

    def _on_route_error(self, notice: RouteErrorNotice) -> None:
        if notice.orig_src == self.node:
            self.transfer.notify_route_error(self.node, notice.app_seq,
                                             notice.unreachable)
            return
        self._relay_route_error(notice)

    # ------------------------------------------------------------------
    # dispatch from the transfer layer

    def handle_control(self, msg, sent_at: int) -> None:
        if isinstance(msg, DiscoveryRequest):
            self._on_discovery_request(msg)
        elif isinstance(msg, DiscoveryResponse):
            self._on_discovery_response(msg, sent_at)
        elif isinstance(msg, TableAdvert):
            self._on_advert(msg, sent_at)
        elif isinstance(msg, RouteErrorNotice):
            self._on_route_error(msg)
        else:
            raise TypeError(f"unknown control message {type(msg).__name__}")
