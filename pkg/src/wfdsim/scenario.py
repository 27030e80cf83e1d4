"""Scenario files: the declarative description of a run.

A scenario is a YAML document with five sections: ``sim`` (seed, duration
and timing knobs), ``nodes`` (positions, radio profile, GO intent, relay
energy cost), ``script`` (timed connect/join/bridge directives), ``mobility``
(timed waypoint moves) and ``traffic`` (timed application sends).  Parsing is
strict: unknown keys anywhere are an error, and every cross-reference is
validated with a message naming the offending entry.

Times in the file are milliseconds; everything becomes integer microseconds
on load.  ``auto_chain: true`` replaces the script section with generated
directives that pair the nodes in file order into two-node groups and then
bridges consecutive group owners.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

import yaml

from .engine import MS, SECOND
from .linklayer import SOCIAL_CHANNELS, BridgingPolicy, LinkConfig
from .routing import RoutingConfig, TrafficClass
from .topology import Position, RadioProfile


class ScenarioError(ValueError):
    pass


_ID_RE = re.compile(r"^[A-Za-z0-9_\-]+$")

_SIM_KEYS = {
    "seed", "duration_ms", "advert_period_ms", "full_dump_every", "ttl",
    "scan_ms", "find_min_ms", "find_max_ms", "discovery_timeout_ms",
    "wps_ms", "keepalive_ms", "keepalive_miss_limit", "overlap_min_ms",
    "bridging",
}
_NODE_KEYS = {"id", "pos", "range_m", "data_rate_bps", "mac_latency_ms",
              "go_intent", "energy_cost", "channel"}
_SCRIPT_KEYS = {"at_ms", "action", "from", "to"}
_MOBILITY_KEYS = {"at_ms", "node", "pos"}
_TRAFFIC_KEYS = {"at_ms", "src", "dst", "payload_bits", "class"}
_ACTIONS = ("connect", "join", "bridge")


@dataclass
class SimSettings:
    seed: int = 1
    duration_us: int = 30 * SECOND
    advert_period_us: int = 1 * SECOND
    full_dump_every: int = 10
    ttl: int = 16
    scan_us: int = 500 * MS
    find_min_us: int = 100 * MS
    find_max_us: int = 300 * MS
    discovery_timeout_us: int = 10 * SECOND
    wps_us: int = 200 * MS
    keepalive_us: int = 1 * SECOND
    keepalive_miss_limit: int = 3
    overlap_min_us: int = 20 * MS
    bridging: BridgingPolicy = BridgingPolicy.GO_AS_LEGACY_CLIENT

    def link_config(self) -> LinkConfig:
        return LinkConfig(self.scan_us, self.find_min_us, self.find_max_us,
                          self.discovery_timeout_us, self.overlap_min_us,
                          self.wps_us, self.keepalive_us,
                          self.keepalive_miss_limit, self.bridging)

    def routing_config(self) -> RoutingConfig:
        return RoutingConfig(self.advert_period_us, self.full_dump_every,
                             self.ttl)


@dataclass
class NodeSpec:
    id: str
    pos: Position
    range_m: float = 200.0
    data_rate_bps: int = 250_000_000
    mac_latency_us: int = 2 * MS
    go_intent: int = 7
    energy_cost: float = 1.0
    channel: int | None = None

    def radio_profile(self) -> RadioProfile:
        return RadioProfile(self.range_m, self.data_rate_bps,
                            self.mac_latency_us)


@dataclass
class ScriptDirective:
    at_us: int
    action: str
    initiator: str
    peer: str


@dataclass
class MobilityStep:
    at_us: int
    node: str
    pos: Position


@dataclass
class TrafficSpec:
    at_us: int
    src: str
    dst: str
    payload_bits: int
    traffic_class: TrafficClass


@dataclass
class Scenario:
    sim: SimSettings
    nodes: list[NodeSpec]
    script: list[ScriptDirective] = field(default_factory=list)
    mobility: list[MobilityStep] = field(default_factory=list)
    traffic: list[TrafficSpec] = field(default_factory=list)

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]


def bundled_scenario_path(name: str):
    """Resolve a bundled scenario name (e.g. 'chain4') to its file path."""
    resource = resources.files("wfdsim").joinpath(f"scenarios/{name}.yaml")
    if not resource.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return resource


def load_scenario(source, strict: bool = True) -> Scenario:
    """Load and validate a scenario from a path, a bundled name, or a
    pre-parsed mapping."""
    if isinstance(source, dict):
        raw = source
    else:
        text = _read(source)
        raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ScenarioError("scenario document must be a mapping")
    return _validate(raw, strict)


def _read(source) -> str:
    path = str(source)
    if _ID_RE.match(path) and "." not in path:
        return bundled_scenario_path(path).read_text(encoding="utf-8")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ScenarioError(message)


def _check_keys(mapping: dict, allowed: set, where: str, strict: bool) -> None:
    if not strict:
        return
    unknown = set(mapping) - allowed
    _require(not unknown,
             f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")


def _int_ms(mapping: dict, key: str, default_us: int, where: str) -> int:
    if key not in mapping:
        return default_us
    value = mapping[key]
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{where}: {key} must be a number of milliseconds")
    us = int(round(value * MS))
    _require(us >= 0, f"{where}: {key} must be non-negative")
    return us


def _validate(raw: dict, strict: bool) -> Scenario:
    _check_keys(raw, {"sim", "nodes", "script", "mobility", "traffic",
                      "auto_chain"}, "scenario", strict)
    sim = _validate_sim(raw.get("sim") or {}, strict)
    nodes = _validate_nodes(raw.get("nodes"), strict)
    ids = {n.id for n in nodes}

    auto_chain = raw.get("auto_chain", False)
    _require(isinstance(auto_chain, bool), "auto_chain must be a boolean")
    if auto_chain:
        _require(not raw.get("script"),
                 "auto_chain and an explicit script are mutually exclusive")
        script = _generate_chain_script(nodes)
    else:
        script = _validate_script(raw.get("script") or [], ids, sim, strict)

    mobility = _validate_mobility(raw.get("mobility") or [], ids, sim, strict)
    traffic = _validate_traffic(raw.get("traffic") or [], ids, sim, strict)
    return Scenario(sim, nodes, script, mobility, traffic)


def _validate_sim(raw: dict, strict: bool) -> SimSettings:
    _require(isinstance(raw, dict), "sim section must be a mapping")
    _check_keys(raw, _SIM_KEYS, "sim", strict)
    defaults = SimSettings()
    seed = raw.get("seed", defaults.seed)
    _require(isinstance(seed, int) and not isinstance(seed, bool),
             "sim: seed must be an integer")
    settings = SimSettings(
        seed=seed,
        duration_us=_int_ms(raw, "duration_ms", defaults.duration_us, "sim"),
        advert_period_us=_int_ms(raw, "advert_period_ms",
                                 defaults.advert_period_us, "sim"),
        scan_us=_int_ms(raw, "scan_ms", defaults.scan_us, "sim"),
        find_min_us=_int_ms(raw, "find_min_ms", defaults.find_min_us, "sim"),
        find_max_us=_int_ms(raw, "find_max_ms", defaults.find_max_us, "sim"),
        discovery_timeout_us=_int_ms(raw, "discovery_timeout_ms",
                                     defaults.discovery_timeout_us, "sim"),
        wps_us=_int_ms(raw, "wps_ms", defaults.wps_us, "sim"),
        keepalive_us=_int_ms(raw, "keepalive_ms", defaults.keepalive_us,
                             "sim"),
        overlap_min_us=_int_ms(raw, "overlap_min_ms",
                               defaults.overlap_min_us, "sim"),
    )
    for key, attr in (("full_dump_every", "full_dump_every"), ("ttl", "ttl"),
                      ("keepalive_miss_limit", "keepalive_miss_limit")):
        if key in raw:
            value = raw[key]
            _require(isinstance(value, int) and not isinstance(value, bool)
                     and value > 0, f"sim: {key} must be a positive integer")
            setattr(settings, attr, value)
    if "bridging" in raw:
        try:
            settings.bridging = BridgingPolicy(raw["bridging"])
        except ValueError:
            raise ScenarioError(
                f"sim: bridging must be one of "
                f"{[p.value for p in BridgingPolicy]}")
    _require(settings.find_min_us <= settings.find_max_us,
             "sim: find_min_ms must not exceed find_max_ms")
    _require(settings.duration_us > 0, "sim: duration_ms must be positive")
    return settings


def _validate_pos(value, where: str) -> Position:
    _require(isinstance(value, (list, tuple)) and len(value) == 2
             and all(isinstance(c, (int, float)) and not isinstance(c, bool)
                     for c in value),
             f"{where}: pos must be [x, y] in meters")
    return Position(float(value[0]), float(value[1]))


def _validate_nodes(raw, strict: bool) -> list[NodeSpec]:
    _require(isinstance(raw, list) and raw,
             "scenario needs a non-empty nodes list")
    nodes: list[NodeSpec] = []
    seen: set[str] = set()
    for i, entry in enumerate(raw):
        where = f"nodes[{i}]"
        _require(isinstance(entry, dict), f"{where} must be a mapping")
        _check_keys(entry, _NODE_KEYS, where, strict)
        node_id = entry.get("id")
        _require(isinstance(node_id, str) and _ID_RE.match(node_id),
                 f"{where}: id must match {_ID_RE.pattern}")
        _require(node_id not in seen, f"duplicate node id {node_id!r}")
        seen.add(node_id)
        spec = NodeSpec(id=node_id, pos=_validate_pos(entry.get("pos"), where))
        if "range_m" in entry:
            _require(isinstance(entry["range_m"], (int, float))
                     and entry["range_m"] > 0,
                     f"{where}: range_m must be positive")
            spec.range_m = float(entry["range_m"])
        if "data_rate_bps" in entry:
            _require(isinstance(entry["data_rate_bps"], int)
                     and entry["data_rate_bps"] > 0,
                     f"{where}: data_rate_bps must be a positive integer")
            spec.data_rate_bps = entry["data_rate_bps"]
        spec.mac_latency_us = _int_ms(entry, "mac_latency_ms",
                                      spec.mac_latency_us, where)
        if "go_intent" in entry:
            intent = entry["go_intent"]
            _require(isinstance(intent, int) and 0 <= intent <= 15,
                     f"{where}: go_intent must be an integer in 0..15")
            spec.go_intent = intent
        if "energy_cost" in entry:
            cost = entry["energy_cost"]
            _require(isinstance(cost, (int, float)) and cost >= 0,
                     f"{where}: energy_cost must be non-negative")
            spec.energy_cost = float(cost)
        if "channel" in entry and entry["channel"] is not None:
            _require(entry["channel"] in SOCIAL_CHANNELS,
                     f"{where}: channel must be one of {SOCIAL_CHANNELS}")
            spec.channel = entry["channel"]
        nodes.append(spec)
    return nodes


def _validate_at(entry: dict, sim: SimSettings, where: str) -> int:
    at_us = _int_ms(entry, "at_ms", -1, where)
    _require(0 <= at_us <= sim.duration_us,
             f"{where}: at_ms must lie within the simulation duration")
    return at_us


def _validate_script(raw, ids: set[str], sim: SimSettings,
                     strict: bool) -> list[ScriptDirective]:
    _require(isinstance(raw, list), "script section must be a list")
    script = []
    for i, entry in enumerate(raw):
        where = f"script[{i}]"
        _require(isinstance(entry, dict), f"{where} must be a mapping")
        _check_keys(entry, _SCRIPT_KEYS, where, strict)
        action = entry.get("action")
        _require(action in _ACTIONS,
                 f"{where}: action must be one of {_ACTIONS}")
        initiator, peer = entry.get("from"), entry.get("to")
        for label, node in (("from", initiator), ("to", peer)):
            _require(node in ids, f"{where}: {label} references unknown "
                                  f"node {node!r}")
        _require(initiator != peer, f"{where}: from and to must differ")
        script.append(ScriptDirective(_validate_at(entry, sim, where),
                                      action, initiator, peer))
    return script


def _validate_mobility(raw, ids: set[str], sim: SimSettings,
                       strict: bool) -> list[MobilityStep]:
    _require(isinstance(raw, list), "mobility section must be a list")
    steps = []
    for i, entry in enumerate(raw):
        where = f"mobility[{i}]"
        _require(isinstance(entry, dict), f"{where} must be a mapping")
        _check_keys(entry, _MOBILITY_KEYS, where, strict)
        node = entry.get("node")
        _require(node in ids, f"{where}: node references unknown node {node!r}")
        steps.append(MobilityStep(_validate_at(entry, sim, where), node,
                                  _validate_pos(entry.get("pos"), where)))
    return steps


def _validate_traffic(raw, ids: set[str], sim: SimSettings,
                      strict: bool) -> list[TrafficSpec]:
    _require(isinstance(raw, list), "traffic section must be a list")
    flows = []
    for i, entry in enumerate(raw):
        where = f"traffic[{i}]"
        _require(isinstance(entry, dict), f"{where} must be a mapping")
        _check_keys(entry, _TRAFFIC_KEYS, where, strict)
        for label in ("src", "dst"):
            _require(entry.get(label) in ids,
                     f"{where}: {label} references unknown node "
                     f"{entry.get(label)!r}")
        bits = entry.get("payload_bits", 0)
        _require(isinstance(bits, int) and not isinstance(bits, bool)
                 and bits >= 0, f"{where}: payload_bits must be >= 0")
        cls_name = entry.get("class", "REAL_TIME")
        try:
            cls = TrafficClass(cls_name)
        except ValueError:
            raise ScenarioError(
                f"{where}: class must be one of "
                f"{[c.value for c in TrafficClass]}")
        flows.append(TrafficSpec(_validate_at(entry, sim, where),
                                 entry["src"], entry["dst"], bits, cls))
    return flows


def _generate_chain_script(nodes: list[NodeSpec]) -> list[ScriptDirective]:
    _require(len(nodes) >= 2 and len(nodes) % 2 == 0,
             "auto_chain needs an even number of nodes (pairs become groups)")
    script = []
    owners = []
    for i in range(0, len(nodes), 2):
        a, b = nodes[i], nodes[i + 1]
        _require(a.go_intent != b.go_intent,
                 f"auto_chain: nodes {a.id} and {b.id} need distinct "
                 f"go_intent so the group owner is determined")
        script.append(ScriptDirective(0, "connect", a.id, b.id))
        owners.append(a if a.go_intent > b.go_intent else b)
    for i, (left, right) in enumerate(zip(owners, owners[1:])):
        script.append(ScriptDirective((3 + i) * SECOND, "bridge",
                                      left.id, right.id))
    return script
