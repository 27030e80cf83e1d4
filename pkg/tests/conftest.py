"""Shared builders for tests: tiny topologies and programmatic scenarios."""

from __future__ import annotations

import pytest

from wfdsim.engine import Engine, SECOND
from wfdsim.linklayer import LinkLayer, LinkConfig
from wfdsim.scenario import (NodeSpec, Scenario, ScriptDirective, SimSettings,
                             TrafficSpec)
from wfdsim.simulation import Simulation
from wfdsim.topology import Position, Topology


def make_link_world(positions, intents=None, seed=1, config=None,
                    channels=None):
    """Engine + topology + link layer with the given node positions."""
    engine = Engine(seed)
    topo = Topology()
    ll = LinkLayer(engine, topo, config or LinkConfig())
    intents = intents or {}
    channels = channels or {}
    for node, (x, y) in positions.items():
        topo.add_node(node, Position(x, y))
        ll.register_node(node, intents.get(node, 7), channels.get(node))
    return engine, topo, ll


def form_pair(engine, ll, a, b, until_us=2 * SECOND):
    """Drive a and b through discovery and negotiation; returns the group."""
    result = {}
    ll.record_discovery(a, b)
    ll.negotiate_go(a, b, on_complete=lambda g: result.setdefault("group", g))
    engine.run_until(until_us)
    assert "group" in result, "negotiation did not complete"
    return result["group"]


def make_sim(nodes, script=(), traffic=(), mobility=(), seed=1,
             duration_s=15, **sim_kwargs) -> Simulation:
    """Simulation from inline specs.

    nodes: list of (id, x, y, go_intent) or (id, x, y, go_intent, energy_cost)
    script: list of (at_s, action, from, to)
    traffic: list of (at_s, src, dst, payload_bits, TrafficClass)
    """
    specs = []
    for entry in nodes:
        node_id, x, y, intent = entry[:4]
        energy = entry[4] if len(entry) > 4 else 1.0
        specs.append(NodeSpec(id=node_id, pos=Position(float(x), float(y)),
                              go_intent=intent, energy_cost=energy))
    sim_settings = SimSettings(seed=seed, duration_us=duration_s * SECOND,
                               **sim_kwargs)
    scenario = Scenario(
        sim=sim_settings,
        nodes=specs,
        script=[ScriptDirective(int(at * SECOND), action, frm, to)
                for at, action, frm, to in script],
        traffic=[TrafficSpec(int(at * SECOND), src, dst, bits, cls)
                 for at, src, dst, bits, cls in traffic],
    )
    from wfdsim.scenario import MobilityStep
    scenario.mobility = [MobilityStep(int(at * SECOND), node,
                                      Position(float(x), float(y)))
                         for at, node, x, y in mobility]
    return Simulation(scenario)


CHAIN4_NODES = [("A", 0, 0, 3), ("B", 150, 0, 10), ("C", 300, 0, 12),
                ("D", 450, 0, 2)]
CHAIN4_SCRIPT = [(0, "connect", "A", "B"), (0, "connect", "C", "D"),
                 (3, "bridge", "B", "C")]


@pytest.fixture
def chain4_sim():
    from wfdsim.routing import TrafficClass
    return make_sim(CHAIN4_NODES, CHAIN4_SCRIPT,
                    traffic=[(8, "A", "D", 8000, TrafficClass.REAL_TIME)])
