"""Seeded discrete-event network simulation with partial synchrony.

Time is an integer tick counter.  Before a global stabilization time
(gst) the network may drop and duplicate, and delays are drawn from a
configured range; from gst onward every transmission between live
agents is delivered within delta ticks and never dropped (duplication
may persist).  Loss is fair: a bounded number of consecutive drops of
the same (channel, message_id) forces the next copy through, so a
retransmitting sender always gets through eventually.

Each tick proceeds in a fixed order: scheduled crashes, then every
live node's on_tick in ascending id order, then every delivery due
this tick in insertion order.  All randomness flows from one seeded
generator, so a run is a pure function of (config, node behavior) and
the event log is byte-identical across reruns.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace

from .agent import Agent, Infeasible, TransitionLabel
from .wire import Message, encode


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    gst: int = 0                 # tick from which synchrony holds
    delta: int = 5               # post-gst delivery bound (ticks)
    delay_min: int = 1           # pre-gst delay range
    delay_max: int = 10
    drop_rate: float = 0.0       # pre-gst loss probability
    dup_rate: float = 0.0        # duplication probability (both regimes)
    rate_cap: int | None = None  # max sends per agent per tick
    max_consecutive_drops: int = 20
    fault_schedule: tuple[tuple[int, int], ...] = ()  # (agent_id, tick)

    def __post_init__(self) -> None:
        if self.delay_min < 1 or self.delay_max < self.delay_min:
            raise ValueError("need 1 <= delay_min <= delay_max")
        if self.delta < 1:
            raise ValueError("delta must be at least 1")
        # 1.0 is allowed: the consecutive-drop cap still forces
        # deliveries through, so even total loss stays fair-loss.
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be in [0, 1]")
        if not 0.0 <= self.dup_rate <= 1.0:
            raise ValueError("dup_rate must be in [0, 1]")
        if self.max_consecutive_drops < 1:
            raise ValueError("max_consecutive_drops must be at least 1")
        object.__setattr__(
            self,
            "fault_schedule",
            tuple((int(a), int(t)) for a, t in self.fault_schedule),
        )

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "gst": self.gst,
            "delta": self.delta,
            "delay_min": self.delay_min,
            "delay_max": self.delay_max,
            "drop_rate": self.drop_rate,
            "dup_rate": self.dup_rate,
            "rate_cap": self.rate_cap,
            "max_consecutive_drops": self.max_consecutive_drops,
            "fault_schedule": [list(x) for x in self.fault_schedule],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown sim config fields: {sorted(unknown)}")
        kwargs = dict(obj)
        if "fault_schedule" in kwargs:
            kwargs["fault_schedule"] = tuple(
                tuple(x) for x in kwargs["fault_schedule"]
            )
        return cls(**kwargs)


@dataclass(frozen=True)
class EventRecord:
    tick: int
    kind: str  # send | deliver | drop | dup | crash | timer
    sender: int | None = None
    receiver: int | None = None
    uid: int | None = None
    size: int | None = None
    verb: str | None = None
    reason: str | None = None
    wire: str | None = None  # hex of the encoded message (send records)

    def to_json(self) -> dict:
        return {
            k: v
            for k, v in (
                ("tick", self.tick),
                ("kind", self.kind),
                ("sender", self.sender),
                ("receiver", self.receiver),
                ("uid", self.uid),
                ("size", self.size),
                ("verb", self.verb),
                ("reason", self.reason),
                ("wire", self.wire),
            )
            if v is not None
        }


class SimEventLog:
    """Append-only record of everything observable in a run."""

    def __init__(self) -> None:
        self.records: list[EventRecord] = []

    def append(self, rec: EventRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def of_kind(self, kind: str) -> list[EventRecord]:
        return [r for r in self.records if r.kind == kind]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r.to_json(), sort_keys=True, separators=(",", ":"))
            + "\n"
            for r in self.records
        )

    def write_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fp:
            fp.write(self.to_jsonl())

    def sent_messages(self) -> list[bytes]:
        """Wire bytes of every send, in order (one entry per fresh
        transmission, including retransmissions)."""
        return [
            bytes.fromhex(r.wire)
            for r in self.records
            if r.kind == "send" and r.wire is not None
        ]


@dataclass
class TickGauge:
    tick: int
    in_flight: int       # copies scheduled but not yet delivered/dropped
    max_backlog: int     # largest per-receiver pending count this tick
    sent: int
    delivered: int
    dropped: int


def _percentile(sorted_values: list[int], q: float) -> float:
    """Nearest-rank percentile; deterministic and exact on small data."""
    if not sorted_values:
        return float("nan")
    n = len(sorted_values)
    rank = max(1, min(n, -(-int(q * n * 100) // 100)))  # ceil(q*n), clamped
    return float(sorted_values[rank - 1])


@dataclass
class MetricsReport:
    ticks: int
    sends: int
    delivers: int
    drops: int
    dups: int
    crashes: int
    max_in_flight: int
    max_queue_depth: int   # max per-receiver pending over the whole run
    latencies: list[int]
    gauges: list[TickGauge]
    tick_ms: float = 1.0

    def latency_summary(self) -> dict:
        data = sorted(self.latencies)
        if not data:
            return {
                "count": 0,
                "median": None,
                "p95": None,
                "p99": None,
                "max": None,
            }
        return {
            "count": len(data),
            "median": _percentile(data, 0.50),
            "p95": _percentile(data, 0.95),
            "p99": _percentile(data, 0.99),
            "max": float(data[-1]),
        }

    def summary(self) -> dict:
        lat = self.latency_summary()
        lat_ms = {
            k: (v * self.tick_ms if isinstance(v, float) else v)
            for k, v in lat.items()
            if k != "count"
        }
        return {
            "ticks": self.ticks,
            "sends": self.sends,
            "delivers": self.delivers,
            "drops": self.drops,
            "dups": self.dups,
            "crashes": self.crashes,
            "max_in_flight": self.max_in_flight,
            "max_queue_depth": self.max_queue_depth,
            "latency_ticks": lat,
            "latency_ms": lat_ms,
            "tick_ms": self.tick_ms,
        }

    def gauges_csv(self) -> str:
        lines = [
            "tick,in_flight_msgs,max_backlog_msgs,"
            "sent_msgs,delivered_msgs,dropped_msgs"
        ]
        for g in self.gauges:
            lines.append(
                f"{g.tick},{g.in_flight},{g.max_backlog},"
                f"{g.sent},{g.delivered},{g.dropped}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class _Delivery:
    uid: int
    label: TransitionLabel
    send_tick: int


class Network:
    """The event loop: routes labels between nodes under the configured
    failure model and records everything."""

    def __init__(self, config: SimConfig, nodes: list["BasicNode"]):
        self.config = config
        self.rng = random.Random(config.seed)
        self.nodes: dict[int, BasicNode] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise ValueError(f"duplicate node id {node.id}")
            self.nodes[node.id] = node
        self.log = SimEventLog()
        self.now = 0
        self.crashed: set[int] = set()
        self._queue: dict[int, list[_Delivery]] = {}
        self._faults: dict[int, list[int]] = {}
        for aid, tick in config.fault_schedule:
            self._faults.setdefault(tick, []).append(aid)
        self._uid = 0
        self._sends_this_tick: dict[int, int] = {}
        self._drop_streak: dict[tuple[int, int, int], int] = {}
        self._pending_total = 0
        self._pending_per_receiver: dict[int, int] = {}
        self._tick_sent = 0
        self._tick_delivered = 0
        self._tick_dropped = 0
        self._dups = 0
        self._latencies: list[int] = []
        self._gauges: list[TickGauge] = []
        self._max_in_flight = 0
        self._max_queue_depth = 0

    # -- sending ---------------------------------------------------------

    def may_send(self, sender: int) -> bool:
        cap = self.config.rate_cap
        if cap is None:
            return True
        return self._sends_this_tick.get(sender, 0) < cap

    def note(self, **fields) -> None:
        self.log.append(EventRecord(tick=self.now, **fields))

    def transmit(self, label: TransitionLabel, now: int) -> int:
        """Schedule one transmission (plus a possible duplicate) and
        log the send.  Returns the copy count actually scheduled."""
        if label.sender in self.crashed:
            raise RuntimeError(f"crashed agent {label.sender} cannot send")
        cfg = self.config
        self._sends_this_tick[label.sender] = (
            self._sends_this_tick.get(label.sender, 0) + 1
        )
        uid = self._uid
        self._uid += 1
        data = encode(label.message)
        self.log.append(
            EventRecord(
                tick=now,
                kind="send",
                sender=label.sender,
                receiver=label.receiver,
                uid=uid,
                size=len(data),
                verb=label.message.verb.name,
                wire=data.hex(),
            )
        )
        self._tick_sent += 1

        synchronous = now >= cfg.gst
        streak_key = (label.sender, label.receiver, label.message.header.message_id)
        copies = 0
        if synchronous:
            dropped = False
        else:
            dropped = self.rng.random() < cfg.drop_rate
            if dropped and (
                self._drop_streak.get(streak_key, 0)
                >= cfg.max_consecutive_drops
            ):
                dropped = False  # fair loss: force this copy through
        if dropped:
            self._drop_streak[streak_key] = (
                self._drop_streak.get(streak_key, 0) + 1
            )
            self.log.append(
                EventRecord(
                    tick=now,
                    kind="drop",
                    sender=label.sender,
                    receiver=label.receiver,
                    uid=uid,
                    reason="loss",
                )
            )
            self._tick_dropped += 1
        else:
            self._drop_streak.pop(streak_key, None)
            self._schedule(uid, label, now, synchronous)
            copies += 1

        if self.rng.random() < cfg.dup_rate:
            # At most one duplicate per transmission; duplicates are
            # never dropped (they model late copies already in flight).
            self._dups += 1
            self.log.append(
                EventRecord(
                    tick=now,
                    kind="dup",
                    sender=label.sender,
                    receiver=label.receiver,
                    uid=uid,
                )
            )
            self._schedule(uid, label, now, synchronous)
            copies += 1
        return copies

    def _schedule(
        self, uid: int, label: TransitionLabel, now: int, synchronous: bool
    ) -> None:
        cfg = self.config
        if synchronous:
            delay = self.rng.randint(1, cfg.delta)
        else:
            delay = self.rng.randint(cfg.delay_min, cfg.delay_max)
        self._queue.setdefault(now + delay, []).append(
            _Delivery(uid, label, now)
        )
        self._pending_total += 1
        r = label.receiver
        self._pending_per_receiver[r] = self._pending_per_receiver.get(r, 0) + 1

    def _unpend(self, delivery: _Delivery) -> None:
        self._pending_total -= 1
        r = delivery.label.receiver
        self._pending_per_receiver[r] -= 1

    # -- the loop ----------------------------------------------------------

    def step(self) -> None:
        """Advance one tick."""
        now = self.now
        self._sends_this_tick = {}
        self._tick_sent = self._tick_delivered = self._tick_dropped = 0

        for aid in sorted(self._faults.get(now, ())):
            if aid not in self.crashed:
                self.crashed.add(aid)
                self.log.append(
                    EventRecord(tick=now, kind="crash", sender=aid)
                )

        for aid in sorted(self.nodes):
            if aid not in self.crashed:
                self.nodes[aid].on_tick(self, now)

        for delivery in self._queue.pop(now, ()):
            self._unpend(delivery)
            label = delivery.label
            if label.receiver in self.crashed:
                self.log.append(
                    EventRecord(
                        tick=now,
                        kind="drop",
                        sender=label.sender,
                        receiver=label.receiver,
                        uid=delivery.uid,
                        reason="receiver-crashed",
                    )
                )
                self._tick_dropped += 1
                continue
            self.log.append(
                EventRecord(
                    tick=now,
                    kind="deliver",
                    sender=label.sender,
                    receiver=label.receiver,
                    uid=delivery.uid,
                    size=label.message.wire_size,
                    verb=label.message.verb.name,
                )
            )
            self._tick_delivered += 1
            self._latencies.append(now - delivery.send_tick)
            self.nodes[label.receiver].on_deliver(self, label, now)

        backlog = max(self._pending_per_receiver.values(), default=0)
        self._max_in_flight = max(self._max_in_flight, self._pending_total)
        self._max_queue_depth = max(self._max_queue_depth, backlog)
        self._gauges.append(
            TickGauge(
                tick=now,
                in_flight=self._pending_total,
                max_backlog=backlog,
                sent=self._tick_sent,
                delivered=self._tick_delivered,
                dropped=self._tick_dropped,
            )
        )
        self.now = now + 1

    def run(self, until: int) -> SimEventLog:
        while self.now < until:
            self.step()
        return self.log

    def run_until_quiescent(self, max_ticks: int, settle: int = 2) -> bool:
        """Run until no deliveries are in flight for `settle` consecutive
        ticks (or the tick budget runs out).  Returns True if quiescent."""
        idle = 0
        while self.now < max_ticks:
            self.step()
            idle = idle + 1 if self._pending_total == 0 else 0
            if idle >= settle:
                return True
        return self._pending_total == 0

    def metrics(self, tick_ms: float = 1.0) -> MetricsReport:
        counts = {"send": 0, "deliver": 0, "drop": 0, "dup": 0, "crash": 0}
        for r in self.log.records:
            if r.kind in counts:
                counts[r.kind] += 1
        return MetricsReport(
            ticks=self.now,
            sends=counts["send"],
            delivers=counts["deliver"],
            drops=counts["drop"],
            dups=counts["dup"],
            crashes=counts["crash"],
            max_in_flight=self._max_in_flight,
            max_queue_depth=self._max_queue_depth,
            latencies=self._latencies,
            gauges=self._gauges,
            tick_ms=tick_ms,
        )


class BasicNode:
    """Wraps an Agent into the network: delivers inbound messages to it,
    ships its replies, runs its timers, and logs refusals."""

    def __init__(self, agent: Agent):
        self.agent = agent
        self.id = agent.id
        self._timeouts_seen = 0

    def on_tick(self, net: Network, now: int) -> None:
        resends = self.agent.fire_timers(now)
        new_timeouts = self.agent.timeouts[self._timeouts_seen:]
        self._timeouts_seen = len(self.agent.timeouts)
        for cid, peer, _query in new_timeouts:
            net.note(
                kind="timer", sender=self.id, receiver=peer,
                reason="ask-timeout",
            )
        for to, msg in resends:
            net.note(
                kind="timer", sender=self.id, receiver=to,
                reason="retransmit",
            )
            self.emit(net, to, msg, now, fresh=False)

    def on_deliver(self, net: Network, label: TransitionLabel, now: int) -> None:
        try:
            replies = self.agent.receive(label.message, label.sender, now)
        except Infeasible:
            net.note(
                kind="drop", sender=label.sender, receiver=self.id,
                reason="infeasible-receive",
            )
            return
        for to, msg in replies:
            self.emit(net, to, msg, now)

    def emit(
        self,
        net: Network,
        to: int,
        msg: Message,
        now: int,
        *,
        fresh: bool = True,
    ) -> bool:
        """Send one message through the network, honoring the rate cap
        and the agent's budget.  Returns True if it was transmitted."""
        if not net.may_send(self.id):
            net.note(
                kind="drop", sender=self.id, receiver=to,
                verb=msg.verb.name, reason="rate-cap",
            )
            return False
        try:
            label = self.agent.send(msg, to, now, fresh=fresh)
        except Infeasible:
            net.note(
                kind="drop", sender=self.id, receiver=to,
                verb=msg.verb.name, reason="infeasible-send",
            )
            return False
        net.transmit(label, now)
        return True
