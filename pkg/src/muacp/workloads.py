"""Traffic generators for the scaling simulations.

Two workloads run side by side:

  * request/response: every node periodically asks a uniformly chosen
    peer to perform an action (QoS 1, so the ask retransmits until the
    answer or an acknowledgement lands).  The verb semantics produce
    the done() answer without any extra node logic.

  * negotiation: a fixed-size pool of initiators runs contract-net
    rounds against seeded committees (call for proposals, propose or
    refuse, award, completion report).  Pool and committee sizes do
    not grow with the network, so this contributes a size-independent
    hotspot while the request/response load scales with n.

Every initiated conversation is tracked to termination; a run is clean
when started == completed for both kinds, which is what the acceptance
checks assert under one percent message loss.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field, replace

from . import wire
from .agent import Agent
from .fipa import PROC_CODES, Performative
from .simnet import BasicNode, MetricsReport, Network, SimConfig
from .wire import (
    CONTENT_LITERAL,
    Message,
    Option,
    OptionType,
    Verb,
)

_PROC_CFP = bytes((PROC_CODES[Performative.CFP],))
_PROC_PROPOSE = bytes((PROC_CODES[Performative.PROPOSE],))
_PROC_REFUSE = bytes((PROC_CODES[Performative.REFUSE],))
_PROC_ACCEPT = bytes((PROC_CODES[Performative.ACCEPT_PROPOSAL],))
_PROC_REJECT = bytes((PROC_CODES[Performative.REJECT_PROPOSAL],))


@dataclass(frozen=True)
class ScaleConfig:
    n: int = 100
    until: int = 900
    drain: int = 250             # quiet period before the end
    seed: int = 1
    rr_period: int = 40          # ticks between asks per node
    rr_deadline: int = 400
    cnet_initiators: int = 8
    committee: int = 4
    proposal_wait: int = 40
    round_pause: int = 30
    refusal_modulus: int = 5     # member refuses when (id+round) % m == 0
    tick_ms: float = 1.0
    sim: SimConfig = field(
        default_factory=lambda: SimConfig(
            seed=1,
            gst=10**9,           # loss persists for the whole run
            drop_rate=0.01,
            delay_min=1,
            delay_max=10,
        )
    )

    def __post_init__(self) -> None:
        if self.n < max(10, self.cnet_initiators + self.committee):
            raise ValueError("network too small for the configured pool")
        if self.until <= self.drain:
            raise ValueError("run must be longer than the drain period")

    def to_json(self) -> dict:
        out = {
            f: getattr(self, f)
            for f in self.__dataclass_fields__
            if f != "sim"
        }
        out["sim"] = self.sim.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ScaleConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown scale config fields: {sorted(unknown)}")
        kwargs = dict(obj)
        if "sim" in kwargs:
            kwargs["sim"] = SimConfig.from_json(kwargs["sim"])
        return cls(**kwargs)


class WorkloadStats:
    """Shared conversation ledger for one run."""

    def __init__(self) -> None:
        self.started: Counter = Counter()
        self.completed: Counter = Counter()
        self.failed: Counter = Counter()
        self.latencies: dict[str, list[int]] = {}

    def start(self, kind: str) -> None:
        self.started[kind] += 1

    def complete(self, kind: str, latency: int) -> None:
        self.completed[kind] += 1
        self.latencies.setdefault(kind, []).append(latency)

    def fail(self, kind: str) -> None:
        self.failed[kind] += 1

    def clean(self) -> bool:
        return (
            sum(self.failed.values()) == 0
            and all(
                self.completed[k] == self.started[k] for k in self.started
            )
        )

    def snapshot(self) -> dict:
        return {
            "started": dict(sorted(self.started.items())),
            "completed": dict(sorted(self.completed.items())),
            "failed": dict(sorted(self.failed.items())),
            "clean": self.clean(),
        }


@dataclass
class _Round:
    cid: int
    task: str
    committee: list[int]
    deadline: int
    started_at: int
    proposals: set[int] = field(default_factory=set)
    refusals: set[int] = field(default_factory=set)
    awarded: int | None = None


class ScaleNode(BasicNode):
    """Combined workload behavior: every node answers requests and
    serves on committees; initiator nodes additionally run rounds."""

    def __init__(
        self,
        agent: Agent,
        cfg: ScaleConfig,
        stats: WorkloadStats,
        *,
        initiator: bool,
    ):
        super().__init__(agent)
        self.cfg = cfg
        self.stats = stats
        self.initiator = initiator
        self.rng = random.Random((cfg.seed << 20) ^ (agent.id * 2654435761))
        self.peers = [i for i in range(cfg.n) if i != agent.id]
        self.stop_at = cfg.until - cfg.drain
        self.offset = (agent.id * 17) % cfg.rr_period

        self.rr_outstanding: dict[int, int] = {}  # cid -> start tick
        self._answers_seen = 0
        self._timeouts_handled = 0

        self.round: _Round | None = None
        self.round_counter = 0
        self.next_round_at = 5 + (agent.id % 7)
        self.proposed_convs: set[tuple[int, int]] = set()
        self.done_sent: set[tuple[int, int]] = set()

    # -- request/response ----------------------------------------------

    def _harvest(self, now: int) -> None:
        answers = self.agent.answers
        while self._answers_seen < len(answers):
            cid, _msg = answers[self._answers_seen]
            self._answers_seen += 1
            started = self.rr_outstanding.pop(cid, None)
            if started is not None:
                self.stats.complete("request", now - started)
        timeouts = self.agent.timeouts
        while self._timeouts_handled < len(timeouts):
            cid, _peer, _query = timeouts[self._timeouts_handled]
            self._timeouts_handled += 1
            if self.rr_outstanding.pop(cid, None) is not None:
                self.stats.fail("request")

    def _maybe_ask(self, net: Network, now: int) -> None:
        if now >= self.stop_at or now < self.offset:
            return
        if (now - self.offset) % self.cfg.rr_period != 0:
            return
        peer = self.rng.choice(self.peers)
        msg = self.agent.make_ask(
            f"job_{self.id}_{now}()",
            kind=wire.CONTENT_ACTION,
            qos=1,
            deadline=self.cfg.rr_deadline,
        )
        if self.emit(net, peer, msg, now):
            self.rr_outstanding[msg.header.correlation_id] = now
            self.stats.start("request")

    # -- contract rounds --------------------------------------------------

    def _start_round(self, net: Network, now: int) -> None:
        self.round_counter += 1
        task = f"task_{self.id}_{self.round_counter}"
        committee = sorted(
            self.rng.sample(
                [p for p in self.peers if p >= self.cfg.cnet_initiators],
                self.cfg.committee,
            )
        )
        cid = self.agent.fresh_cid()
        self.round = _Round(
            cid=cid,
            task=task,
            committee=committee,
            deadline=now + self.cfg.proposal_wait,
            started_at=now,
        )
        self.stats.start("negotiation")
        # Each copy gets its own header correlation id so its QoS-1
        # retransmission is tracked independently; the CID option holds
        # the round id that groups the conversation.
        for member in committee:
            msg = self.agent.build(
                Verb.ASK,
                options=(
                    Option(OptionType.PROC, _PROC_CFP),
                    wire.opt_cid(cid),
                ),
                payload=task.encode(),
                qos=1,
            )
            self.emit(net, member, msg, now)

    def _advance_round(self, net: Network, now: int) -> None:
        r = self.round
        if r is None:
            if self.initiator and self.round_counter >= 0:
                if now >= self.next_round_at and now < self.stop_at:
                    self._start_round(net, now)
            return
        if r.awarded is None:
            responded = len(r.proposals) + len(r.refusals)
            if responded < len(r.committee) and now < r.deadline:
                return
            if not r.proposals:
                # Every member refused (or nothing arrived in time):
                # the round terminates cleanly with no award.
                self.stats.complete("negotiation", now - r.started_at)
                self.round = None
                self.next_round_at = now + self.cfg.round_pause
                return
            winner = min(r.proposals)
            r.awarded = winner
            for member in sorted(r.proposals):
                code = _PROC_ACCEPT if member == winner else _PROC_REJECT
                msg = self.agent.build(
                    Verb.TELL,
                    options=(
                        Option(OptionType.PROC, code),
                        wire.opt_cid(r.cid),
                    ),
                    payload=r.task.encode(),
                    qos=1,
                )
                self.emit(net, member, msg, now)

    def _complete_round(self, now: int) -> None:
        r = self.round
        self.stats.complete("negotiation", now - r.started_at)
        self.round = None
        self.next_round_at = now + self.cfg.round_pause

    # -- node hooks ---------------------------------------------------------

    def on_tick(self, net: Network, now: int) -> None:
        super().on_tick(net, now)
        self._harvest(now)
        self._maybe_ask(net, now)
        if self.initiator:
            self._advance_round(net, now)

    def on_deliver(self, net: Network, label, now: int) -> None:
        super().on_deliver(net, label, now)
        msg = label.message
        proc = msg.find(OptionType.PROC)
        if proc is not None:
            self._on_proc(net, proc.value, msg, label.sender, now)
            return
        if self.initiator and self.round is not None:
            ct = msg.find(OptionType.CONTENT_TYPE)
            if (
                msg.header.verb == Verb.TELL
                and ct is not None
                and ct.value == bytes((CONTENT_LITERAL,))
                and msg.payload.decode("utf-8", "replace")
                == f"done({self.round.task})"
                and label.sender == self.round.awarded
            ):
                self._complete_round(now)

    def _on_proc(
        self, net: Network, code: bytes, msg: Message, sender: int, now: int
    ) -> None:
        cid_opt = msg.find(OptionType.CID)
        if cid_opt is None or len(cid_opt.value) != 4:
            return
        conv = wire.decode_u32(cid_opt.value)  # round id
        if code == _PROC_CFP:
            key = (sender, conv)
            if key in self.proposed_convs:
                return
            self.proposed_convs.add(key)
            task = msg.payload.decode("utf-8", "replace")
            refuse = (
                self.id + int(task.rsplit("_", 1)[-1])
            ) % self.cfg.refusal_modulus == 0
            reply_code = _PROC_REFUSE if refuse else _PROC_PROPOSE
            payload = (
                task if refuse else f"bid({self.id})"
            ).encode()
            reply = self.agent.build(
                Verb.TELL,
                options=(
                    Option(OptionType.PROC, reply_code),
                    wire.opt_cid(conv),
                ),
                payload=payload,
                qos=1,
            )
            self.emit(net, sender, reply, now)
            return
        if code in (_PROC_PROPOSE, _PROC_REFUSE):
            r = self.round
            if r is None or conv != r.cid or sender not in r.committee:
                return
            if code == _PROC_PROPOSE:
                r.proposals.add(sender)
            else:
                r.refusals.add(sender)
            if r.awarded is None:
                self._advance_round(net, now)
            return
        if code == _PROC_ACCEPT:
            key = (sender, conv)
            if key in self.done_sent:
                return
            self.done_sent.add(key)
            task = msg.payload.decode("utf-8", "replace")
            done = self.agent.make_tell(f"done({task})", qos=1)
            self.emit(net, sender, done, now)
            return
        # rejections need no action beyond the automatic acknowledgement


@dataclass
class ScaleReport:
    config: ScaleConfig
    metrics: MetricsReport
    workload: dict
    infeasible_events: int

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "metrics": self.metrics.summary(),
            "workload": self.workload,
            "infeasible_events": self.infeasible_events,
        }


def build_scale(cfg: ScaleConfig) -> tuple[Network, WorkloadStats]:
    stats = WorkloadStats()
    nodes = [
        ScaleNode(
            Agent(i),
            cfg,
            stats,
            initiator=i < cfg.cnet_initiators,
        )
        for i in range(cfg.n)
    ]
    return Network(cfg.sim, nodes), stats


def run_scale(cfg: ScaleConfig) -> tuple[ScaleReport, Network]:
    net, stats = build_scale(cfg)
    net.run(cfg.until)
    infeasible = sum(
        node.agent.infeasible_count for node in net.nodes.values()
    )
    report = ScaleReport(
        config=cfg,
        metrics=net.metrics(cfg.tick_ms),
        workload=stats.snapshot(),
        infeasible_events=infeasible,
    )
    return report, net


def load_scale_config(path: str) -> ScaleConfig:
    with open(path, "r", encoding="utf-8") as fp:
        return ScaleConfig.from_json(json.load(fp))
