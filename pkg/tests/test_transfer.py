"""Transfer plane: connection composition, transport registry, application
send/receive and delivery reporting."""

import pytest

from wfdsim.engine import MS, SECOND, EventClass
from wfdsim.linklayer import DeviceState, Frame, OutOfRangeError
from wfdsim.routing import Packet, TrafficClass
from wfdsim.summary import parse_trace_line
from wfdsim.transfer import (ConnectionState, DeliveryOutcome,
                             RoleConflictError, StubTransport, TransportId,
                             UnsupportedTransportError)
from wfdsim.topology import Position

from conftest import make_sim


def lines(sim, event_class):
    return [parse_trace_line(r.line()) for r in sim.trace.records
            if r.event_class is event_class]


def pair_sim(**kwargs):
    return make_sim([("a", 0, 0, 9), ("b", 100, 0, 1)],
                    script=[(0, "connect", "a", "b")], **kwargs)


# ----------------------------------------------------------------------
# connect

def test_connect_two_idle_nodes_forms_group_and_goes_up():
    sim = pair_sim()
    sim.run_until(3 * SECOND)
    conn = sim.transfer.connections[0]
    assert conn.state is ConnectionState.UP
    assert sim.linklayer.state("a") is DeviceState.GROUP_OWNER
    assert sim.linklayer.state("b") is DeviceState.GROUP_CLIENT


def test_connect_idle_node_to_existing_owner_joins():
    sim = make_sim([("go", 0, 0, 14), ("c1", -75, 0, 2), ("c2", 75, 0, 3)],
                   script=[(0, "connect", "c1", "go"),
                           (3, "connect", "c2", "go")])
    sim.run_until(5 * SECOND)
    group = sim.linklayer.owned_group("go")
    assert group.clients == {"c1", "c2"}
    assert sim.linklayer.state("c2") is DeviceState.GROUP_CLIENT


def test_connect_owner_to_idle_node_joins_the_peer():
    sim = make_sim([("go", 0, 0, 14), ("c1", -75, 0, 2), ("c2", 75, 0, 3)],
                   script=[(0, "connect", "c1", "go"),
                           (3, "connect", "go", "c2")])
    sim.run_until(5 * SECOND)
    assert sim.linklayer.owned_group("go").clients == {"c1", "c2"}


def test_connect_client_to_foreign_node_is_role_conflict():
    sim = make_sim([("go", 0, 0, 14), ("c1", -75, 0, 2), ("c2", 75, 0, 3)],
                   script=[(0, "connect", "c1", "go"),
                           (3, "connect", "c2", "go")])
    sim.run_until(5 * SECOND)
    with pytest.raises(RoleConflictError):
        sim.transfer.connect("c1", "c2")


def test_connect_out_of_range_rejected():
    sim = make_sim([("a", 0, 0, 9), ("z", 5000, 0, 1)])
    with pytest.raises(OutOfRangeError):
        sim.transfer.connect("a", "z")


def test_connect_two_owners_bridges():
    sim = make_sim(
        [("a1", 0, 0, 2), ("b1", 150, 0, 12), ("b2", 300, 0, 13),
         ("a2", 450, 0, 3)],
        script=[(0, "connect", "a1", "b1"), (0, "connect", "b2", "a2"),
                (3, "connect", "b1", "b2")])
    sim.run_until(5 * SECOND)
    assert ("b1", "b2") in sim.linklayer.deliverable_pairs()
    up = [c for c in sim.transfer.connections
          if {c.local, c.peer} == {"b1", "b2"}]
    assert up and up[0].state is ConnectionState.UP


def test_connection_closes_when_link_dies():
    sim = pair_sim(mobility=[(5, "b", 9000, 9000)], duration_s=12)
    sim.run_until(12 * SECOND)
    conn = sim.transfer.connections[0]
    assert conn.state is ConnectionState.CLOSED
    assert conn.reason == "link_down"


# ----------------------------------------------------------------------
# frame arithmetic

def test_one_megabyte_single_hop_takes_exactly_34_ms():
    sim = pair_sim()
    sim.run_until(3 * SECOND)
    seq = sim.transfer.app_send("b", "a", 8_000_000, TrafficClass.BULK)
    sim.run_until(5 * SECOND)
    report = sim.transfer.report(seq)
    assert report.outcome is DeliveryOutcome.DELIVERED
    assert report.latency_us == 34 * MS


def test_zero_payload_still_pays_mac_latency():
    sim = pair_sim()
    sim.run_until(3 * SECOND)
    seq = sim.transfer.app_send("a", "b", 0, TrafficClass.REAL_TIME)
    sim.run_until(5 * SECOND)
    report = sim.transfer.report(seq)
    assert report.outcome is DeliveryOutcome.DELIVERED
    assert report.latency_us == 2 * MS


def test_send_to_peer_that_moved_away_reports_lost_and_invalidates():
    sim = pair_sim(duration_s=20)
    sim.run_until(3 * SECOND)
    assert sim.table("a").primary("b").valid
    # queue the frame, then yank the receiver out of range mid-flight
    seq = sim.transfer.app_send("a", "b", 8_000_000, TrafficClass.BULK)
    sim.run_until(3 * SECOND + 10 * MS)
    sim.topology.apply_move("b", Position(9000.0, 9000.0))
    sim.run_until(5 * SECOND)
    report = sim.transfer.report(seq)
    assert report.outcome is DeliveryOutcome.LOST
    assert not sim.table("a").primary("b").valid


# ----------------------------------------------------------------------
# app interface

def test_self_send_is_a_degenerate_local_delivery():
    sim = pair_sim()
    sim.run_until(3 * SECOND)
    seq = sim.transfer.app_send("a", "a", 123, TrafficClass.REAL_TIME)
    report = sim.transfer.report(seq)
    assert report.outcome is DeliveryOutcome.DELIVERED
    assert report.path == ["a"]
    assert report.latency_us == 0
    assert ("a", 123, seq) in sim.transfer.app_receive("a")


def test_send_to_unreachable_destination_reports_no_route():
    sim = make_sim([("a", 0, 0, 9), ("b", 100, 0, 1), ("z", 9000, 9000, 5)],
                   script=[(0, "connect", "a", "b")])
    sim.run_until(3 * SECOND)
    seq = sim.transfer.app_send("a", "z", 100, TrafficClass.REAL_TIME)
    sim.run_until(4 * SECOND)
    assert sim.transfer.report(seq).outcome is DeliveryOutcome.NO_ROUTE


def test_app_receive_in_delivery_order_and_exactly_once():
    sim = pair_sim()
    sim.run_until(3 * SECOND)
    s1 = sim.transfer.app_send("a", "b", 10, TrafficClass.REAL_TIME)
    s2 = sim.transfer.app_send("a", "b", 20, TrafficClass.REAL_TIME)
    sim.run_until(4 * SECOND)
    inbox = sim.transfer.app_receive("b")
    assert inbox == [("a", 10, s1), ("a", 20, s2)]
    assert sim.transfer.app_receive("a") == []


def test_duplicate_injection_suppressed_by_dedup_window():
    sim = pair_sim()
    sim.run_until(3 * SECOND)
    pkt = Packet("a", "b", 777, 16, TrafficClass.REAL_TIME, 10)
    sim.agent("b").forward(pkt)
    dup = Packet("a", "b", 777, 16, TrafficClass.REAL_TIME, 10)
    sim.agent("b").forward(dup)
    inbox = [m for m in sim.transfer.app_receive("b") if m[2] == 777]
    assert len(inbox) == 1
    drops = [r for r in lines(sim, EventClass.DROP)
             if r.details.get("reason") == "duplicate"]
    assert len(drops) == 1


def test_delivered_path_consistent_with_trace(chain4_sim):
    sim = chain4_sim
    sim.run()
    report = sim.transfer.report(0)
    assert report.outcome is DeliveryOutcome.DELIVERED
    forwards = [r for r in lines(sim, EventClass.FORWARD)
                if r.details["app_seq"] == "0"]
    delivers = [r for r in lines(sim, EventClass.DELIVER)
                if r.details["app_seq"] == "0"]
    assert report.path == [r.node for r in forwards] + [delivers[0].node]
    assert report.path[0] == report.src
    assert report.path[-1] == report.dst


# ----------------------------------------------------------------------
# transport registry

def test_stub_transports_reject_sends():
    stub = StubTransport(TransportId.ZIGBEE)
    with pytest.raises(UnsupportedTransportError):
        stub.send_frame(Frame("a", "b", 1, 10, None))
    assert not stub.claims_link("a", "b")


def test_removing_wifi_transport_fails_sends_and_nothing_else_breaks():
    sim = pair_sim(duration_s=40)
    sim.run_until(3 * SECOND)
    sim.transfer.registry.remove(TransportId.WIFI_DIRECT_SIM)
    with pytest.raises(UnsupportedTransportError):
        sim.transfer.registry.for_link("a", "b")
    seq = sim.transfer.app_send("a", "b", 100, TrafficClass.REAL_TIME)
    sim.run_until(10 * SECOND)  # run on: no exceptions may surface
    drops = [r for r in lines(sim, EventClass.DROP)
             if r.details.get("reason") == "unsupported"]
    assert drops, "the failed send should be traced as unsupported"
    sim.run_until(35 * SECOND)  # the report timeout fires
    assert sim.transfer.report(seq).outcome is DeliveryOutcome.LOST
    sim.linklayer.check_consistency()


def test_registry_restores_sends_when_transport_returns():
    from wfdsim.transfer import WifiDirectSimTransport
    sim = pair_sim()
    sim.run_until(3 * SECOND)
    sim.transfer.registry.remove(TransportId.WIFI_DIRECT_SIM)
    sim.transfer.registry.register(WifiDirectSimTransport(sim.linklayer))
    seq = sim.transfer.app_send("a", "b", 100, TrafficClass.REAL_TIME)
    sim.run_until(4 * SECOND)
    assert sim.transfer.report(seq).outcome is DeliveryOutcome.DELIVERED
