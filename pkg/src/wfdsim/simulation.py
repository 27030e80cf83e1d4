"""Builds a runnable simulation out of a scenario and drives it.

One Simulation owns one Engine and everything scheduled against it; nothing
is global, so independent simulations can run side by side.  Script
directives whose preconditions are not yet met (a bridge before both groups
exist, a join before the owner is up) retry every 500 ms until they apply
or the run ends.
"""

from __future__ import annotations

from .engine import MS, Engine, EventClass, EventKind, NodeId
from .linklayer import (DeviceState, LinkError, LinkLayer, InvalidStateError)
from .routing import RoutingAgent
from .transfer import TransferError
from .scenario import Scenario, ScriptDirective, load_scenario
from .summary import Summary, build_summary
from .topology import Topology
from .transfer import TransferLayer

DIRECTIVE_RETRY_US = 500 * MS


class _NotReady(Exception):
    pass


class Simulation:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        sim = scenario.sim
        self.engine = Engine(sim.seed)
        self.topology = Topology()
        for spec in scenario.nodes:
            self.topology.add_node(spec.id, spec.pos, spec.radio_profile())
        self.linklayer = LinkLayer(self.engine, self.topology,
                                   sim.link_config())
        self.transfer = TransferLayer(self.engine, self.linklayer)
        self.agents: dict[NodeId, RoutingAgent] = {}
        routing_config = sim.routing_config()
        for spec in scenario.nodes:
            self.linklayer.register_node(spec.id, spec.go_intent, spec.channel)
            agent = RoutingAgent(spec.id, self.engine, spec.energy_cost,
                                 routing_config)
            self.agents[spec.id] = agent
            self.transfer.attach_agent(agent)

        self.engine.on(EventKind.ADVERT_TICK, self._on_advert_tick)
        self.engine.on(EventKind.MOBILITY_STEP, self._on_mobility_step)
        for node in sorted(self.agents):
            self.engine.schedule(sim.advert_period_us, EventKind.ADVERT_TICK,
                                 node)
        for directive in scenario.script:
            self.engine.call_later(directive.at_us,
                                   lambda d=directive: self._run_directive(d),
                                   directive.initiator)
        for step in scenario.mobility:
            self.engine.schedule(step.at_us, EventKind.MOBILITY_STEP,
                                 step.node, step.pos)
        for flow in scenario.traffic:
            self.engine.call_later(
                flow.at_us,
                lambda f=flow: self.transfer.app_send(
                    f.src, f.dst, f.payload_bits, f.traffic_class),
                flow.src)

    @classmethod
    def from_source(cls, source, strict: bool = True) -> "Simulation":
        return cls(load_scenario(source, strict=strict))

    # ------------------------------------------------------------------
    # event dispatch

    def _on_advert_tick(self, event) -> None:
        self.engine.schedule(self.scenario.sim.advert_period_us,
                             EventKind.ADVERT_TICK, event.target)
        self.agents[event.target].advert_tick()

    def _on_mobility_step(self, event) -> None:
        self.topology.apply_move(event.target, event.payload)

    def _run_directive(self, directive: ScriptDirective) -> None:
        ll = self.linklayer
        try:
            if directive.action == "join":
                if ll.state(directive.peer) is not DeviceState.GROUP_OWNER:
                    raise _NotReady
            elif directive.action == "bridge":
                if ll.state(directive.initiator) is not DeviceState.GROUP_OWNER \
                        or ll.state(directive.peer) is not DeviceState.GROUP_OWNER:
                    raise _NotReady
            self.transfer.connect(directive.initiator, directive.peer)
        except (_NotReady, InvalidStateError):
            if self.engine.now() + DIRECTIVE_RETRY_US \
                    <= self.scenario.sim.duration_us:
                self.engine.log(directive.initiator, EventClass.CONNECT,
                                action="retry", peer=directive.peer,
                                what=directive.action)
                self.engine.call_later(
                    DIRECTIVE_RETRY_US,
                    lambda: self._run_directive(directive),
                    directive.initiator)
            else:
                self.engine.log(directive.initiator, EventClass.CONNECT,
                                action="failed", peer=directive.peer,
                                reason="not_ready")
        except (LinkError, TransferError) as exc:
            self.engine.log(directive.initiator, EventClass.CONNECT,
                            action="failed", peer=directive.peer,
                            reason=type(exc).__name__)

    # ------------------------------------------------------------------
    # running

    def run_until(self, t_us: int) -> int:
        return self.engine.run_until(t_us)

    def run(self) -> Summary:
        self.run_until(self.scenario.sim.duration_us)
        return self.summary()

    def summary(self) -> Summary:
        return build_summary(self.engine.trace.lines())

    # ------------------------------------------------------------------
    # conveniences for tests and callers

    @property
    def trace(self):
        return self.engine.trace

    def agent(self, node: NodeId) -> RoutingAgent:
        return self.agents[node]

    def table(self, node: NodeId):
        return self.agents[node].table
