"""Single-decree consensus over the four-verb protocol.

Phase-1 solicitations ride ASK, everything else rides TELL; ballots
and values travel as options, so no new verbs or header fields are
needed:

    prepare   ASK   BALLOT(b) CONV(k)                  fresh cid
    promise   TELL  response, BALLOT(b echo)           prepare's cid
              [+ BALLOT(accepted b') VALUE(v')]  if something was
                                                 accepted earlier
    nack      TELL  response, ERR(promised ballot)     echoed cid
    accept    TELL  BALLOT(b) VALUE(v) CONV(k)         fresh cid
    accepted  TELL  response, BALLOT(b) VALUE(v)       accept's cid
    decide    TELL  VALUE(v) CONV(k), QoS 1            fresh cid/peer

Every participant is an acceptor; a configurable subset also propose.
A proposer acts only while it believes it is the leader (the lowest
proposer id it does not suspect); suspicion comes from a ping-based
eventually-perfect failure detector whose per-peer timeout doubles
whenever a suspicion proves wrong.  A message a participant addresses
to itself never touches the network: it is applied locally in the same
tick, but still counts as one protocol message.

Safety needs no synchrony: with any majority quorum, two different
values can never both be chosen.  The exhaustive checker at the bottom
verifies that claim over every delivery interleaving of a small
two-proposer configuration, not just sampled schedules.
"""

from __future__ import annotations

import json
import struct
from collections import Counter, deque
from dataclasses import dataclass, field

from . import wire
from .agent import Agent, Infeasible
from .simnet import BasicNode, Network, SimConfig
from .wire import FLAG_RESPONSE, Message, Option, OptionType, Verb

_BALLOT = struct.Struct(">II")


@dataclass(frozen=True, order=True)
class Ballot:
    """Totally ordered by (round, proposer); proposer ids break ties so
    distinct proposers can never mint equal ballots."""

    round: int
    proposer: int

    def encode(self) -> bytes:
        return _BALLOT.pack(self.round, self.proposer)

    @classmethod
    def decode(cls, data: bytes) -> "Ballot":
        if len(data) != 8:
            raise wire.WireError(f"ballot must be 8 bytes, got {len(data)}")
        r, p = _BALLOT.unpack(data)
        return cls(r, p)


def opt_ballot(b: Ballot) -> Option:
    return Option(OptionType.BALLOT, b.encode())


def opt_value(v: bytes) -> Option:
    return Option(OptionType.VALUE, v)


@dataclass(frozen=True)
class Classified:
    kind: str  # prepare | promise | nack | accept | accepted | decide
    ballot: Ballot | None = None
    prior: tuple[Ballot, bytes] | None = None  # promise's accepted pair
    value: bytes | None = None
    instance: int | None = None


def classify(msg: Message) -> Classified | None:
    """Recognize a consensus message purely from its shape.  The six
    kinds have pairwise distinct verb/flag/option profiles, so no
    conversation state is needed."""
    h = msg.header
    ballots = msg.find_all(OptionType.BALLOT)
    value = msg.find(OptionType.VALUE)
    conv = msg.find(OptionType.CONV)
    err = msg.find(OptionType.ERR)
    instance = wire.decode_u32(conv.value) if conv is not None else None

    if h.verb == Verb.ASK and len(ballots) == 1 and not h.is_response:
        return Classified(
            "prepare", ballot=Ballot.decode(ballots[0].value),
            instance=instance,
        )
    if h.verb != Verb.TELL:
        return None
    if h.is_response and err is not None and len(err.value) == 8:
        return Classified("nack", ballot=Ballot.decode(err.value))
    if h.is_response and len(ballots) == 2 and value is not None:
        return Classified(
            "promise",
            ballot=Ballot.decode(ballots[0].value),
            prior=(Ballot.decode(ballots[1].value), value.value),
        )
    if h.is_response and len(ballots) == 1 and value is None:
        return Classified("promise", ballot=Ballot.decode(ballots[0].value))
    if h.is_response and len(ballots) == 1 and value is not None:
        return Classified(
            "accepted",
            ballot=Ballot.decode(ballots[0].value),
            value=value.value,
        )
    if (
        not h.is_response
        and len(ballots) == 1
        and value is not None
    ):
        return Classified(
            "accept",
            ballot=Ballot.decode(ballots[0].value),
            value=value.value,
            instance=instance,
        )
    if (
        not h.is_response
        and not ballots
        and value is not None
        and conv is not None
    ):
        return Classified("decide", value=value.value, instance=instance)
    return None


# -- failure detection ----------------------------------------------------


@dataclass
class _Monitor:
    timeout: int
    suspected: bool = False
    outstanding: tuple[int, int] | None = None  # (cid, sent_at)
    next_ping_at: int = 0


@dataclass(frozen=True)
class SuspicionEvent:
    tick: int
    peer: int
    event: str  # "suspect" | "restore"
    timeout: int


class FailureDetector:
    """Ping-based eventually-perfect detector.

    One probe per peer is outstanding at a time.  A probe unanswered
    for the peer's current timeout marks the peer suspected and a new
    probe goes out immediately; any pong from a suspected peer clears
    the suspicion and doubles that peer's timeout (up to a cap), which
    is what makes wrong suspicions die out after stabilization."""

    def __init__(
        self,
        peers: list[int],
        *,
        ping_interval: int,
        timeout: int,
        timeout_cap: int,
        start: int = 0,
    ):
        self.ping_interval = ping_interval
        self.timeout_cap = timeout_cap
        self.monitors = {
            p: _Monitor(timeout=timeout, next_ping_at=start + i)
            for i, p in enumerate(sorted(peers))
        }
        self.history: list[SuspicionEvent] = []

    def suspects(self, peer: int) -> bool:
        return self.monitors[peer].suspected

    @property
    def suspected(self) -> set[int]:
        return {p for p, m in self.monitors.items() if m.suspected}

    def step(self, now: int) -> list[int]:
        """Peers that need a fresh probe this tick.  The caller must
        follow up with note_ping for each."""
        due = []
        for peer in sorted(self.monitors):
            m = self.monitors[peer]
            if m.outstanding is not None:
                _cid, sent_at = m.outstanding
                if now - sent_at >= m.timeout:
                    if not m.suspected:
                        m.suspected = True
                        self.history.append(
                            SuspicionEvent(now, peer, "suspect", m.timeout)
                        )
                    m.outstanding = None
                    m.next_ping_at = now
            if m.outstanding is None and now >= m.next_ping_at:
                due.append(peer)
        return due

    def note_ping(self, peer: int, cid: int, now: int) -> None:
        m = self.monitors[peer]
        m.outstanding = (cid, now)
        m.next_ping_at = now + self.ping_interval

    def on_pong(self, peer: int, now: int) -> None:
        if peer not in self.monitors:
            return
        m = self.monitors[peer]
        m.outstanding = None
        if m.suspected:
            m.suspected = False
            m.timeout = min(m.timeout * 2, self.timeout_cap)
            self.history.append(
                SuspicionEvent(now, peer, "restore", m.timeout)
            )


def suspicion_bound(
    crash_tick: int,
    ping_interval: int,
    timeout: int,
    delivery_bound: int,
) -> int:
    """Latest tick by which a correct detector must suspect a peer that
    crashed at crash_tick: one last in-flight pong may land as late as
    crash+delivery_bound, the next probe goes out within ping_interval,
    and that probe times out after `timeout` (plus one tick of loop
    granularity)."""
    return crash_tick + delivery_bound + ping_interval + timeout + 1


# -- participant -----------------------------------------------------------

_IDLE, _PREPARING, _ACCEPTING = "idle", "preparing", "accepting"


class Participant(BasicNode):
    """One consensus node: always an acceptor, optionally a proposer."""

    def __init__(
        self,
        agent: Agent,
        peers: list[int],
        proposer_ids: list[int],
        *,
        value: bytes | None = None,
        instance: int = 1,
        retry_timeout: int = 30,
        retry_backoff: int = 3,
        ping_interval: int = 5,
        fd_timeout: int = 25,
        fd_timeout_cap: int = 200,
    ):
        super().__init__(agent)
        self.peers = sorted(peers)
        self.others = [p for p in self.peers if p != self.id]
        self.proposer_ids = sorted(proposer_ids)
        self.is_proposer = self.id in self.proposer_ids
        self.quorum = len(self.peers) // 2 + 1
        self.instance = instance
        self.value = value if value is not None else f"v{self.id}".encode()
        self.retry_timeout = retry_timeout
        self.retry_backoff = retry_backoff

        # acceptor state
        self.promised: Ballot | None = None
        self.accepted: tuple[Ballot, bytes] | None = None

        # proposer state
        self.phase = _IDLE
        self.current_ballot: Ballot | None = None
        self.proposal: bytes = self.value
        self.promises: dict[int, tuple[Ballot, bytes] | None] = {}
        self.accept_acks: set[int] = set()
        self.attempt_deadline: int | None = None
        self.cooldown_until = 0
        self.max_round_seen = 0

        self.decided: bytes | None = None
        self.decided_tick: int | None = None
        self.counts: Counter = Counter()

        self.fd = FailureDetector(
            self.others,
            ping_interval=ping_interval,
            timeout=fd_timeout,
            timeout_cap=fd_timeout_cap,
        )

    # -- node hooks ---------------------------------------------------

    def on_tick(self, net: Network, now: int) -> None:
        super().on_tick(net, now)
        for peer in self.fd.step(now):
            cid = self.agent.fresh_cid()
            ping = self.agent.make_ping(cid=cid)
            if self.emit(net, peer, ping, now):
                self.fd.note_ping(peer, cid, now)
        if self.decided is not None or not self.is_proposer:
            return
        if self._leader() != self.id:
            if self.phase != _IDLE and self._expired(now):
                self.phase = _IDLE
            return
        if (self.phase == _IDLE and now >= self.cooldown_until) or (
            self.phase != _IDLE and self._expired(now)
        ):
            self._start_attempt(net, now)

    def on_deliver(self, net: Network, label, now: int) -> None:
        msg = label.message
        try:
            replies = self.agent.receive(msg, label.sender, now)
        except Infeasible:
            net.note(
                kind="drop", sender=label.sender, receiver=self.id,
                reason="infeasible-receive",
            )
            return
        for to, m in replies:
            self.emit(net, to, m, now)
        c = classify(msg)
        if c is not None:
            self._consume(c, label.sender, now, net)
        elif msg.header.verb == Verb.PING and msg.header.is_response:
            self.fd.on_pong(label.sender, now)

    # -- proposer ------------------------------------------------------

    def _leader(self) -> int:
        live = [
            p
            for p in self.proposer_ids
            if p == self.id or not self.fd.suspects(p)
        ]
        return live[0] if live else self.id

    def _expired(self, now: int) -> bool:
        return self.attempt_deadline is not None and now >= self.attempt_deadline

    def _start_attempt(self, net: Network, now: int) -> None:
        self.max_round_seen += 1
        ballot = Ballot(self.max_round_seen, self.id)
        self.current_ballot = ballot
        self.phase = _PREPARING
        self.promises = {}
        self.accept_acks = set()
        self.attempt_deadline = now + self.retry_timeout
        for peer in self.peers:
            self.counts["prepare"] += 1
            if peer == self.id:
                # local short-circuit still counts as one logical exchange
                reply = self._acceptor_prepare(ballot)
                self.counts[reply.kind] += 1
                self._consume(reply, self.id, now, net)
            else:
                msg = self.agent.build(
                    Verb.ASK,
                    options=(
                        opt_ballot(ballot),
                        wire.opt_conv(self.instance),
                    ),
                )
                self.emit(net, peer, msg, now)

    def _choose_value(self) -> bytes:
        best: tuple[Ballot, bytes] | None = None
        for pair in self.promises.values():
            if pair is not None and (best is None or pair[0] > best[0]):
                best = pair
        return best[1] if best is not None else self.value

    def _begin_accept(self, net: Network, now: int) -> None:
        ballot = self.current_ballot
        self.phase = _ACCEPTING
        self.proposal = self._choose_value()
        self.attempt_deadline = now + self.retry_timeout
        for peer in self.peers:
            self.counts["accept"] += 1
            if peer == self.id:
                reply = self._acceptor_accept(ballot, self.proposal)
                self.counts[reply.kind] += 1
                self._consume(reply, self.id, now, net)
            else:
                msg = self.agent.build(
                    Verb.TELL,
                    options=(
                        opt_ballot(ballot),
                        opt_value(self.proposal),
                        wire.opt_conv(self.instance),
                    ),
                )
                self.emit(net, peer, msg, now)

    # -- acceptor (pure state transitions, reused by the local path) ----

    def _acceptor_prepare(self, b: Ballot) -> Classified:
        self.max_round_seen = max(self.max_round_seen, b.round)
        if self.promised is None or b > self.promised:
            self.promised = b
            if self.accepted is not None:
                return Classified("promise", ballot=b, prior=self.accepted)
            return Classified("promise", ballot=b)
        return Classified("nack", ballot=self.promised)

    def _acceptor_accept(self, b: Ballot, v: bytes) -> Classified:
        self.max_round_seen = max(self.max_round_seen, b.round)
        if self.promised is None or b >= self.promised:
            self.promised = b
            self.accepted = (b, v)
            return Classified("accepted", ballot=b, value=v)
        return Classified("nack", ballot=self.promised)

    # -- message handling ------------------------------------------------

    def _consume(
        self, c: Classified, sender: int, now: int, net: Network
    ) -> None:
        kind = c.kind
        if kind == "prepare":
            reply = self._acceptor_prepare(c.ballot)
            self._reply(net, sender, reply, c, now)
            return
        if kind == "accept":
            reply = self._acceptor_accept(c.ballot, c.value)
            self._reply(net, sender, reply, c, now)
            return
        if kind == "promise":
            if self.phase == _PREPARING and c.ballot == self.current_ballot:
                self.promises[sender] = c.prior
                if len(self.promises) >= self.quorum:
                    self._begin_accept(net, now)
            return
        if kind == "accepted":
            if self.phase == _ACCEPTING and c.ballot == self.current_ballot:
                self.accept_acks.add(sender)
                if len(self.accept_acks) >= self.quorum:
                    self._decide(self.proposal, now, net)
            return
        if kind == "nack":
            self.max_round_seen = max(self.max_round_seen, c.ballot.round)
            if self.phase != _IDLE:
                self.phase = _IDLE
                # Deterministic per-id backoff so dueling proposers
                # desynchronize instead of nacking each other forever.
                self.cooldown_until = now + self.retry_backoff + (
                    self.id % (self.retry_backoff + 1)
                )
            return
        if kind == "decide":
            self._decide(c.value, now, net)
            return

    def _reply(
        self, net: Network, to: int, reply: Classified, cause: Classified,
        now: int,
    ) -> None:
        """Send an acceptor verdict back; local causes are consumed
        directly (the network never carries self-messages)."""
        self.counts[reply.kind] += 1
        if to == self.id:
            self._consume(reply, self.id, now, net)
            return
        if reply.kind == "promise":
            opts: list[Option] = [opt_ballot(reply.ballot)]
            if reply.prior is not None:
                opts.append(opt_ballot(reply.prior[0]))
                opts.append(opt_value(reply.prior[1]))
            msg = self.agent.build(
                Verb.TELL, options=tuple(opts), flags=FLAG_RESPONSE
            )
        elif reply.kind == "accepted":
            msg = self.agent.build(
                Verb.TELL,
                options=(opt_ballot(reply.ballot), opt_value(reply.value)),
                flags=FLAG_RESPONSE,
            )
        else:  # nack
            msg = self.agent.build(
                Verb.TELL,
                options=(wire.opt_err(reply.ballot.encode()),),
                flags=FLAG_RESPONSE,
            )
        self.emit(net, to, msg, now)

    def _decide(self, v: bytes, now: int, net: Network) -> None:
        if self.decided is not None:
            return
        self.decided = v
        self.decided_tick = now
        self.phase = _IDLE
        for peer in self.others:
            self.counts["decide"] += 1
            msg = self.agent.build(
                Verb.TELL,
                options=(opt_value(v), wire.opt_conv(self.instance)),
                qos=1,
            )
            self.emit(net, peer, msg, now)


# -- seeded runs -------------------------------------------------------------


@dataclass(frozen=True)
class DecreeConfig:
    n: int = 3
    proposers: tuple[int, ...] | None = None  # default: every node
    values: tuple[str, ...] | None = None     # per proposer, default v<id>
    sim: SimConfig = field(default_factory=SimConfig)
    until: int = 600
    instance: int = 1
    retry_timeout: int = 30
    ping_interval: int = 5
    fd_timeout: int = 25
    fd_timeout_cap: int = 200

    def proposer_ids(self) -> list[int]:
        if self.proposers is None:
            return list(range(self.n))
        return sorted(self.proposers)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "proposers": (
                list(self.proposers) if self.proposers is not None else None
            ),
            "values": list(self.values) if self.values is not None else None,
            "sim": self.sim.to_json(),
            "until": self.until,
            "instance": self.instance,
            "retry_timeout": self.retry_timeout,
            "ping_interval": self.ping_interval,
            "fd_timeout": self.fd_timeout,
            "fd_timeout_cap": self.fd_timeout_cap,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DecreeConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(
                f"unknown decree config fields: {sorted(unknown)}"
            )
        kwargs = dict(obj)
        if "sim" in kwargs:
            kwargs["sim"] = SimConfig.from_json(kwargs["sim"])
        if kwargs.get("proposers") is not None:
            kwargs["proposers"] = tuple(kwargs["proposers"])
        if kwargs.get("values") is not None:
            kwargs["values"] = tuple(kwargs["values"])
        return cls(**kwargs)


@dataclass
class DecreeOutcome:
    config: DecreeConfig
    decided: dict[int, bytes]
    decided_tick: dict[int, int]
    crashed: set[int]
    counts: Counter
    proposed: set[bytes]
    suspicions: dict[int, list[SuspicionEvent]]
    ticks: int
    log: object

    @property
    def decided_values(self) -> set[bytes]:
        return set(self.decided.values())

    @property
    def safety_ok(self) -> bool:
        vals = self.decided_values
        return len(vals) <= 1 and vals <= self.proposed

    @property
    def survivors(self) -> set[int]:
        return set(range(self.config.n)) - self.crashed

    @property
    def all_survivors_decided(self) -> bool:
        return all(i in self.decided for i in self.survivors)

    def core_message_count(self) -> int:
        return sum(
            self.counts[k] for k in ("prepare", "promise", "accept", "accepted")
        )


def run_decree(config: DecreeConfig) -> DecreeOutcome:
    """Execute one seeded decree to completion or the tick budget."""
    proposer_ids = config.proposer_ids()
    values: dict[int, bytes] = {}
    if config.values is not None:
        if len(config.values) != len(proposer_ids):
            raise ValueError("values must match proposers one to one")
        values = {
            pid: v.encode() for pid, v in zip(proposer_ids, config.values)
        }
    participants = []
    for i in range(config.n):
        participants.append(
            Participant(
                Agent(i),
                peers=list(range(config.n)),
                proposer_ids=proposer_ids,
                value=values.get(i),
                instance=config.instance,
                retry_timeout=config.retry_timeout,
                ping_interval=config.ping_interval,
                fd_timeout=config.fd_timeout,
                fd_timeout_cap=config.fd_timeout_cap,
            )
        )
    net = Network(config.sim, participants)
    while net.now < config.until:
        net.step()
        if all(
            p.decided is not None
            for p in participants
            if p.id not in net.crashed
        ):
            break
    counts: Counter = Counter()
    for p in participants:
        counts.update(p.counts)
    return DecreeOutcome(
        config=config,
        decided={
            p.id: p.decided for p in participants if p.decided is not None
        },
        decided_tick={
            p.id: p.decided_tick
            for p in participants
            if p.decided_tick is not None
        },
        crashed=set(net.crashed),
        counts=counts,
        proposed={
            participants[pid].value for pid in proposer_ids
        },
        suspicions={p.id: list(p.fd.history) for p in participants},
        ticks=net.now,
        log=net.log,
    )


# -- seeded campaigns ---------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    """A batch of decree runs differing only in seed and in the crash
    schedule derived from each seed."""

    base: DecreeConfig
    seeds: tuple[int, ...]
    crash_count: int = 0
    crash_window: tuple[int, int] = (5, 40)

    def to_json(self) -> dict:
        return {
            "base": self.base.to_json(),
            "seeds": list(self.seeds),
            "crash_count": self.crash_count,
            "crash_window": list(self.crash_window),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CampaignConfig":
        known = {"base", "seeds", "seed_base", "seed_count", "crash_count",
                 "crash_window"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(
                f"unknown campaign config fields: {sorted(unknown)}"
            )
        if "seeds" in obj:
            seeds = tuple(int(s) for s in obj["seeds"])
        else:
            base_seed = int(obj.get("seed_base", 0))
            count = int(obj.get("seed_count", 1))
            seeds = tuple(range(base_seed, base_seed + count))
        return cls(
            base=DecreeConfig.from_json(obj["base"]),
            seeds=seeds,
            crash_count=int(obj.get("crash_count", 0)),
            crash_window=tuple(obj.get("crash_window", (5, 40))),
        )


def derive_fault_schedule(
    seed: int, n: int, crash_count: int, window: tuple[int, int]
) -> tuple[tuple[int, int], ...]:
    """Deterministic per-seed crash schedule: which agents fail and when."""
    import random as _random

    rng = _random.Random((seed * 0x9E3779B1) & 0xFFFFFFFF)
    if crash_count <= 0:
        return ()
    victims = rng.sample(range(n), min(crash_count, n))
    lo, hi = window
    return tuple(
        sorted((v, rng.randint(lo, hi)) for v in sorted(victims))
    )


@dataclass
class CampaignRun:
    seed: int
    outcome: DecreeOutcome

    def row(self) -> dict:
        o = self.outcome
        ticks = sorted(o.decided_tick.values())
        return {
            "seed": self.seed,
            "n": o.config.n,
            "crashed": len(o.crashed),
            "decided": len(o.decided),
            "survivors": len(o.survivors),
            "all_survivors_decided": o.all_survivors_decided,
            "safety_ok": o.safety_ok,
            "core_messages": o.core_message_count(),
            "prepares": o.counts["prepare"],
            "promises": o.counts["promise"],
            "accepts": o.counts["accept"],
            "accepteds": o.counts["accepted"],
            "nacks": o.counts["nack"],
            "decides": o.counts["decide"],
            "first_decision_tick": ticks[0] if ticks else None,
            "last_decision_tick": ticks[-1] if ticks else None,
            "ticks": o.ticks,
        }


def run_campaign(
    cfg: CampaignConfig, *, collect_corpus: bool = False
) -> tuple[list[CampaignRun], Counter]:
    """Run every seed.  Returns the runs plus (optionally) a corpus of
    message-shape counts harvested from every transmitted message."""
    from .compression import symbol_of

    runs: list[CampaignRun] = []
    corpus: Counter = Counter()
    for seed in cfg.seeds:
        schedule = derive_fault_schedule(
            seed, cfg.base.n, cfg.crash_count, cfg.crash_window
        )
        sim = SimConfig.from_json(
            {**cfg.base.sim.to_json(), "seed": seed,
             "fault_schedule": [list(x) for x in schedule]}
        )
        config = DecreeConfig.from_json(
            {**cfg.base.to_json(), "sim": sim.to_json()}
        )
        outcome = run_decree(config)
        runs.append(CampaignRun(seed=seed, outcome=outcome))
        if collect_corpus:
            for blob in outcome.log.sent_messages():
                corpus[symbol_of(wire.decode(blob))] += 1
    return runs, corpus


# -- exhaustive interleaving safety check ------------------------------------


@dataclass(frozen=True)
class ExhaustiveReport:
    explored_states: int
    delivered_bound: int
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def exhaustive_interleaving_check(
    n: int = 3,
    proposer_values: tuple[bytes, ...] = (b"x", b"y"),
    max_deliveries: int = 14,
) -> ExhaustiveReport:
    """Explore every delivery ordering of a multi-proposer decree up to
    a bounded number of deliveries and assert no two nodes ever decide
    different values.

    Message loss needs no separate branching: a lost message is one
    that is simply never delivered, and every such schedule is a prefix
    of an explored one.  The model mirrors the live implementation:
    acceptor rules are identical and self-messages apply immediately.
    """
    quorum = n // 2 + 1
    proposers = tuple(range(len(proposer_values)))

    # proposer state: (phase, promise-senders, best prior, acks, decided)
    # acceptor state: (promised, accepted-pair)
    def init():
        acceptors = tuple((None, None) for _ in range(n))
        props = []
        msgs: Counter = Counter()
        for p in proposers:
            ballot = (1, p)
            acceptors, reply = _model_prepare(acceptors, p, ballot)
            promises = frozenset()
            prior = None
            if reply[0] == "promise":
                promises = frozenset({p})
                prior = reply[1]
            props.append(("preparing", promises, prior, frozenset(), None))
            for a in range(n):
                if a != p:
                    msgs[("prepare", p, a, ballot)] += 1
        return acceptors, tuple(props), msgs

    def _model_prepare(acceptors, a, ballot):
        promised, accepted = acceptors[a]
        if promised is None or ballot > promised:
            acc = list(acceptors)
            acc[a] = (ballot, accepted)
            return tuple(acc), ("promise", accepted)
        return acceptors, ("nack",)

    def _model_accept(acceptors, a, ballot, value):
        promised, accepted = acceptors[a]
        if promised is None or ballot >= promised:
            acc = list(acceptors)
            acc[a] = (ballot, (ballot, value))
            return tuple(acc), True
        return acceptors, False

    def _freeze(msgs: Counter):
        return tuple(sorted(msgs.items()))

    violations: list[str] = []
    seen: set = set()
    start = init()
    # Breadth-first so each state is first visited at its minimal
    # delivery depth; exploring from there subsumes any deeper revisit,
    # which makes the seen-set pruning sound under the depth cap.
    queue = deque([(start[0], start[1], _freeze(start[2]), 0)])
    explored = 0

    while queue:
        acceptors, props, msgs_frozen, depth = queue.popleft()
        key = (acceptors, props, msgs_frozen)
        if key in seen:
            continue
        seen.add(key)
        explored += 1

        decided_vals = {st[4] for st in props if st[4] is not None}
        if len(decided_vals) > 1:
            violations.append(
                f"divergent decisions {sorted(decided_vals)} after "
                f"{depth} deliveries"
            )
            continue
        if depth >= max_deliveries:
            continue

        msgs = Counter(dict(msgs_frozen))
        for m in sorted(msgs):
            new_acc, new_props, new_msgs = acceptors, list(props), msgs.copy()
            new_msgs[m] -= 1
            if new_msgs[m] == 0:
                del new_msgs[m]
            kind = m[0]
            if kind == "prepare":
                _, p, a, ballot = m
                new_acc, reply = _model_prepare(new_acc, a, ballot)
                if reply[0] == "promise":
                    new_msgs[("promise", a, p, ballot, reply[1])] += 1
            elif kind == "promise":
                _, a, p, ballot, prior = m
                phase, promises, best, acks, decided = new_props[p]
                if phase == "preparing" and ballot == (1, p):
                    promises = promises | {a}
                    if prior is not None and (
                        best is None or prior[0] > best[0]
                    ):
                        best = prior
                    if len(promises) >= quorum:
                        value = (
                            best[1] if best is not None
                            else proposer_values[p]
                        )
                        phase = "accepting"
                        # self-accept applies immediately
                        new_acc, ok = _model_accept(
                            new_acc, p, ballot, value
                        )
                        if ok:
                            acks = frozenset({p})
                        for a2 in range(n):
                            if a2 != p:
                                new_msgs[
                                    ("accept", p, a2, ballot, value)
                                ] += 1
                        new_props[p] = (phase, promises, best, acks, decided)
                        if len(acks) >= quorum:
                            new_props[p] = (
                                phase, promises, best, acks, value,
                            )
                    else:
                        new_props[p] = (phase, promises, best, acks, decided)
            elif kind == "accept":
                _, p, a, ballot, value = m
                new_acc, ok = _model_accept(new_acc, a, ballot, value)
                if ok:
                    new_msgs[("accepted", a, p, ballot, value)] += 1
            elif kind == "accepted":
                _, a, p, ballot, value = m
                phase, promises, best, acks, decided = new_props[p]
                if phase == "accepting" and ballot == (1, p):
                    acks = acks | {a}
                    if len(acks) >= quorum and decided is None:
                        decided = value
                    new_props[p] = (phase, promises, best, acks, decided)
            queue.append(
                (new_acc, tuple(new_props), _freeze(new_msgs), depth + 1)
            )

    return ExhaustiveReport(
        explored_states=explored,
        delivered_bound=max_deliveries,
        violations=tuple(violations),
    )
