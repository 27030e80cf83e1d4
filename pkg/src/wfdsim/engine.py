"""Deterministic discrete-event core: virtual clock, event queue, seeded
randomness and the trace sink every other layer schedules against.

Virtual time is integer microseconds since simulation start.  Events are
totally ordered by (fire_at, seq) where seq is the insertion sequence, so
ties at equal fire_at resolve in schedule order and replays are exact.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

MS = 1_000            # microseconds per millisecond
SECOND = 1_000_000    # microseconds per second

NodeId = str


class EventKind(Enum):
    """Closed set of schedulable event kinds."""

    TIMER = "timer"
    FRAME_ARRIVAL = "frame_arrival"
    ADVERT_TICK = "advert_tick"
    APP_SEND = "app_send"
    MOBILITY_STEP = "mobility_step"


class EventClass(Enum):
    """Closed set of trace record classes."""

    DISCOVERY = "DISCOVERY"
    NEGOTIATION = "NEGOTIATION"
    GROUP = "GROUP"
    ADVERT = "ADVERT"
    FORWARD = "FORWARD"
    DELIVER = "DELIVER"
    DROP = "DROP"
    CONNECT = "CONNECT"


@dataclass(order=True)
class Event:
    fire_at: int
    seq: int
    kind: EventKind = field(compare=False)
    target: NodeId | None = field(compare=False, default=None)
    payload: Any = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)


class EventHandle:
    """Cancellation token for a scheduled event."""

    __slots__ = ("_event",)

    def __init__(self, event: Event):
        self._event = event

    def cancel(self) -> None:
        self._event.cancelled = True

    @property
    def cancelled(self) -> bool:
        return self._event.cancelled

    @property
    def fire_at(self) -> int:
        return self._event.fire_at


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return format(value, "g")
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


@dataclass
class TraceRecord:
    time_us: int
    node: NodeId
    event_class: EventClass
    details: list[tuple[str, Any]]

    def line(self) -> str:
        parts = [str(self.time_us), self.node, self.event_class.value]
        parts += [f"{k}={_format_value(v)}" for k, v in self.details]
        return " ".join(parts)


class Trace:
    """Append-only record sink.

    The serialized form is one record per line:
    ``time_us node EVENT_CLASS key=value ...``
    with keys in the order the emitting site listed them.  Records appear
    in (time, seq) order because they are emitted from in-order event
    processing.
    """

    def __init__(self) -> None:
        self.records: list[TraceRecord] = []

    def emit(self, record: TraceRecord) -> None:
        self.records.append(record)

    def lines(self) -> list[str]:
        return [r.line() for r in self.records]

    def dump(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dump())

    def sha256(self) -> str:
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()


class RandomSource:
    """Seeded randomness with per-name substreams.

    Substreams are derived by hashing (seed, name) with sha256, so a
    node's draw sequence does not depend on the order nodes are created
    or iterated, and is identical across runs and platforms.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, random.Random] = {}

    def stream(self, name: str) -> random.Random:
        rng = self._streams.get(name)
        if rng is None:
            material = hashlib.sha256(f"{self.seed}/{name}".encode()).digest()
            rng = random.Random(int.from_bytes(material[:8], "big"))
            self._streams[name] = rng
        return rng


def uniform_duration(rng: random.Random, lo_us: int, hi_us: int) -> int:
    """Draw an integer duration in [lo_us, hi_us); degenerate lo==hi gives lo."""
    if lo_us > hi_us:
        raise ValueError(f"empty duration interval [{lo_us}, {hi_us})")
    if lo_us == hi_us:
        return lo_us
    return lo_us + rng.randrange(hi_us - lo_us)


class Engine:
    """Single-threaded event loop owning all state of one simulation run.

    Nothing is global: independent Engine instances can run concurrently.
    """

    def __init__(self, seed: int = 0):
        self._now = 0
        self._queue: list[Event] = []
        self._seq = itertools.count()
        self._last_popped: tuple[int, int] | None = None
        self._handlers: dict[EventKind, Callable[[Event], None]] = {}
        self.rng = RandomSource(seed)
        self.trace = Trace()
        self.steps = 0

    def now(self) -> int:
        return self._now

    def node_rng(self, node: NodeId) -> random.Random:
        return self.rng.stream(f"node:{node}")

    def on(self, kind: EventKind, handler: Callable[[Event], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, delay_us: int, kind: EventKind,
                 target: NodeId | None = None, payload: Any = None) -> EventHandle:
        if delay_us < 0:
            raise ValueError(f"negative delay {delay_us}")
        event = Event(self._now + delay_us, next(self._seq), kind, target, payload)
        heapq.heappush(self._queue, event)
        return EventHandle(event)

    def call_later(self, delay_us: int, fn: Callable[[], None],
                   target: NodeId | None = None) -> EventHandle:
        return self.schedule(delay_us, EventKind.TIMER, target, fn)

    def run_until(self, t_end_us: int) -> int:
        """Process every event with fire_at <= t_end_us; now() ends at t_end_us."""
        if t_end_us < self._now:
            raise ValueError(f"t_end {t_end_us} is in the past (now={self._now})")
        steps = 0
        while self._queue and self._queue[0].fire_at <= t_end_us:
            event = heapq.heappop(self._queue)
            if event.cancelled:
                continue
            key = (event.fire_at, event.seq)
            assert self._last_popped is None or key > self._last_popped, \
                "event order violated"
            self._last_popped = key
            self._now = event.fire_at
            self._dispatch(event)
            steps += 1
        self._now = t_end_us
        self.steps += steps
        return steps

    def _dispatch(self, event: Event) -> None:
        if event.kind is EventKind.TIMER:
            event.payload()
            return
        handler = self._handlers.get(event.kind)
        if handler is None:
            raise RuntimeError(f"no handler registered for {event.kind}")
        handler(event)

    def log(self, node: NodeId, event_class: EventClass, **details: Any) -> None:
        self.trace.emit(TraceRecord(self._now, node, event_class,
                                    list(details.items())))

