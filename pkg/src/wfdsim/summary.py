"""Run summaries, recomputable from the trace alone.

`build_summary` consumes serialized trace lines (either fresh from a run or
read back from a trace file) so the figures a run reports and the figures
`replay` recomputes go through the identical code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ParsedRecord:
    time_us: int
    node: str
    event_class: str
    details: dict[str, str]


def parse_trace_line(line: str) -> ParsedRecord:
    parts = line.strip().split(" ")
    if len(parts) < 3:
        raise ValueError(f"malformed trace line: {line!r}")
    details = {}
    for part in parts[3:]:
        key, _, value = part.partition("=")
        details[key] = value
    return ParsedRecord(int(parts[0]), parts[1], parts[2], details)


@dataclass
class FlowSummary:
    app_seq: int
    src: str
    dst: str
    traffic_class: str
    outcome: str
    latency_us: int | None
    path: list[str]


@dataclass
class AdvertStats:
    tx: int = 0
    entries: int = 0
    full_dumps: int = 0


@dataclass
class Summary:
    flows: list[FlowSummary] = field(default_factory=list)
    adverts: dict[str, AdvertStats] = field(default_factory=dict)
    convergence_us: int = 0
    drops: dict[str, int] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"flows={len(self.flows)}"]
        for f in self.flows:
            latency = f.latency_us if f.latency_us is not None else "-"
            path = ",".join(f.path) if f.path else "-"
            lines.append(f"flow app_seq={f.app_seq} src={f.src} dst={f.dst} "
                         f"class={f.traffic_class} outcome={f.outcome} "
                         f"latency_us={latency} path={path}")
        for node in sorted(self.adverts):
            s = self.adverts[node]
            lines.append(f"adverts node={node} tx={s.tx} entries={s.entries} "
                         f"full_dumps={s.full_dumps}")
        lines.append(f"convergence_us={self.convergence_us}")
        for reason in sorted(self.drops):
            lines.append(f"drop reason={reason} count={self.drops[reason]}")
        return "".join(line + "\n" for line in lines)


_TERMINAL_DROPS = {"ttl_expired": "TTL_EXPIRED", "no_route": "NO_ROUTE",
                   "lost": "LOST"}


def build_summary(lines) -> Summary:
    records = [parse_trace_line(line) for line in lines if line.strip()]
    summary = Summary()
    flows: dict[int, FlowSummary] = {}
    starts: dict[int, int] = {}

    for rec in records:
        summary.adverts.setdefault(rec.node, AdvertStats())
        d = rec.details
        if rec.event_class == "FORWARD":
            app_seq = int(d["app_seq"])
            if d["src"] == rec.node and app_seq not in flows:
                flows[app_seq] = FlowSummary(app_seq, d["src"], d["dst"],
                                             d.get("cls", "-"), "LOST", None,
                                             [])
                starts[app_seq] = rec.time_us
            flow = flows.get(app_seq)
            if flow is not None and flow.outcome == "LOST" and \
                    d["src"] == flow.src:
                flow.path.append(rec.node)
        elif rec.event_class == "DELIVER":
            app_seq = int(d["app_seq"])
            flow = flows.get(app_seq)
            if flow is None:
                # self-send or delivery without a source-side FORWARD
                flow = FlowSummary(app_seq, d["src"], rec.node,
                                   d.get("cls", "-"), "LOST", None, [])
                flows[app_seq] = flow
                starts[app_seq] = rec.time_us
            if flow.outcome == "LOST" and flow.latency_us is None:
                flow.outcome = "DELIVERED"
                flow.latency_us = rec.time_us - starts[app_seq]
                flow.path.append(rec.node)
        elif rec.event_class == "DROP":
            reason = d.get("reason", "unknown")
            summary.drops[reason] = summary.drops.get(reason, 0) + 1
            if reason in _TERMINAL_DROPS and "app_seq" in d:
                app_seq = int(d["app_seq"])
                flow = flows.get(app_seq)
                if flow is None and "src" in d and "dst" in d:
                    flow = FlowSummary(app_seq, d["src"], d["dst"],
                                       d.get("cls", "-"), "LOST", None, [])
                    flows[app_seq] = flow
                if flow is not None and flow.outcome == "LOST" and \
                        flow.latency_us is None:
                    flow.outcome = _TERMINAL_DROPS[reason]
        elif rec.event_class == "ADVERT":
            if d.get("action") == "tx":
                stats = summary.adverts[rec.node]
                stats.tx += 1
                stats.entries += int(d.get("n", 0))
                stats.full_dumps += 1 if d.get("full") == "1" else 0
                summary.adverts[rec.node] = stats
            elif d.get("action") == "rx":
                summary.convergence_us = max(summary.convergence_us,
                                             rec.time_us)
        elif rec.event_class == "DISCOVERY":
            if d.get("action") == "resp" and d.get("changed", "-") != "-":
                summary.convergence_us = max(summary.convergence_us,
                                             rec.time_us)

    summary.flows = [flows[k] for k in sorted(flows)]
    return summary
