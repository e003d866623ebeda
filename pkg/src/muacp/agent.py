"""Per-agent message handling semantics.

An agent holds a knowledge base of ground literals, a bounded history
ring, pending queries with deadlines, reliable-delivery timers, and a
resource budget.  Every send and receive is charged against the budget
before any state changes; an infeasible transition raises and leaves
the agent exactly as it was.

Processing rules for inbound messages:

  PING  (no response flag)  -> reply PING with the response flag set
  TELL  content-type=literal -> insert the literal into the kb
  ASK   content-type=literal -> answer from the kb (TELL response),
                                or TELL response + ERR "unknown"
  ASK   content-type=action  -> perform abstractly, assert done(a),
                                reply TELL "done(a)" response
  ASK   with no content-type -> application-level, no automatic reply
  OBSERVE with topic         -> register (topic, sender) subscription
  malformed input            -> reply PING with error flag + ERR detail
                                (never in reply to a response, so two
                                 broken peers cannot loop)

Any QoS-1 inbound message that did not already earn a response-flagged
reply gets a bare acknowledgement (PING response, same correlation id).
A response-flagged message with a known correlation id cancels the
retransmission timer and resolves the pending query for that id.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import wire
from .resources import (
    CostModel,
    InfeasibleCharge,
    JournalEntry,
    ResourceBudget,
    UNBOUNDED,
)
from .wire import (
    CONTENT_ACTION,
    CONTENT_LITERAL,
    FLAG_ERROR,
    FLAG_RESPONSE,
    Message,
    Option,
    OptionType,
    Verb,
)

DEFAULT_HISTORY_CAP = 32


class AgentError(Exception):
    pass


class Infeasible(AgentError):
    """The budget cannot pay for this transition; nothing changed."""


class BadContent(AgentError):
    """Structurally valid message whose content cannot be interpreted."""


@dataclass(frozen=True)
class Literal:
    """A ground literal: an atom with a sign.  Atom text is opaque."""

    atom: str
    positive: bool = True

    def text(self) -> str:
        return self.atom if self.positive else "!" + self.atom

    def negate(self) -> "Literal":
        return Literal(self.atom, not self.positive)


def parse_literal(text: str) -> Literal:
    text = text.strip()
    positive = True
    while text[:1] in ("!", "¬"):
        positive = not positive
        text = text[1:].strip()
    if not text:
        raise BadContent("empty literal")
    return Literal(text, positive)


@dataclass(frozen=True)
class TransitionLabel:
    """One directed network transmission.  Self-messages never appear
    as labels; agents handle those locally."""

    sender: int
    receiver: int
    message: Message

    def __post_init__(self) -> None:
        if self.sender == self.receiver:
            raise ValueError("label sender equals receiver")

    @property
    def channel(self) -> tuple[int, int]:
        return (self.sender, self.receiver)


@dataclass
class PendingAsk:
    peer: int
    query: str
    deadline: int


@dataclass
class Retransmit:
    to: int
    message: Message
    interval: int
    next_at: int
    attempts: int = 0


@dataclass
class HistoryEntry:
    time: int
    direction: str  # "in" | "out"
    size: int


class Agent:
    """State and processing rules for one agent."""

    def __init__(
        self,
        agent_id: int,
        *,
        budget: ResourceBudget = UNBOUNDED,
        model: CostModel | None = None,
        h_cap: int = DEFAULT_HISTORY_CAP,
        ask_timeout: int = 50,
        retransmit_interval: int = 8,
        journal: bool = False,
    ):
        if h_cap < 1:
            raise ValueError("history capacity must be at least 1")
        self.id = agent_id
        self.budget = budget
        self.model = model if model is not None else CostModel()
        self.h_cap = h_cap
        self.ask_timeout = ask_timeout
        self.retransmit_interval = retransmit_interval

        self.kb: dict[str, bool] = {}
        self.history: deque[HistoryEntry] = deque()
        self.pending_asks: dict[int, PendingAsk] = {}
        self.retransmits: dict[int, Retransmit] = {}
        self.subscriptions: dict[str, set[int]] = {}
        self.timeouts: list[tuple[int, int, str]] = []  # (cid, peer, query)
        self.answers: list[tuple[int, Message]] = []    # resolved asks
        self.infeasible_count = 0

        self.journal: list[JournalEntry] | None = [] if journal else None

        self._next_mid = 1
        self._next_seq = 1
        self._next_cid = (agent_id & 0xFF) << 8 | 1

    # -- knowledge base ------------------------------------------------

    def kb_insert(self, lit: Literal) -> None:
        """Insert, overwriting any opposite-sign entry for the atom, so
        the kb is always a consistent partial truth assignment."""
        self.kb[lit.atom] = lit.positive

    def kb_insert_text(self, text: str) -> None:
        self.kb_insert(parse_literal(text))

    def kb_lookup(self, atom: str) -> bool | None:
        return self.kb.get(atom)

    # -- message builders ----------------------------------------------

    def fresh_cid(self) -> int:
        cid = self._next_cid & 0xFFFF
        self._next_cid += 1
        return cid

    def build(
        self,
        verb: Verb,
        *,
        options: tuple[Option, ...] | list[Option] = (),
        payload: bytes = b"",
        qos: int = 0,
        flags: int = 0,
        cid: int | None = None,
    ) -> Message:
        if cid is None:
            cid = self.fresh_cid()
        mid = self._next_mid & 0xFFFF
        seq = self._next_seq & 0xFFFF
        self._next_mid += 1
        self._next_seq += 1
        return wire.message(
            verb,
            qos=qos,
            flags=flags,
            message_id=mid,
            sequence=seq,
            correlation_id=cid,
            options=options,
            payload=payload,
        )

    def restamp(self, msg: Message, *, cid: int | None = None) -> Message:
        """Rebuild a template message with this agent's fresh header ids."""
        return self.build(
            msg.header.verb,
            options=msg.options,
            payload=msg.payload,
            qos=msg.header.qos,
            flags=msg.header.flags,
            cid=msg.header.correlation_id if cid is None else cid,
        )

    def make_ping(self, *, cid: int | None = None, qos: int = 0) -> Message:
        return self.build(Verb.PING, qos=qos, cid=cid)

    def make_tell(
        self,
        literal_text: str,
        *,
        cid: int | None = None,
        qos: int = 0,
        response: bool = False,
        topic: str | None = None,
    ) -> Message:
        opts = [wire.opt_content_type(CONTENT_LITERAL)]
        if topic is not None:
            opts.append(wire.opt_topic(topic))
        return self.build(
            Verb.TELL,
            options=tuple(opts),
            payload=parse_literal(literal_text).text().encode("utf-8"),
            qos=qos,
            flags=FLAG_RESPONSE if response else 0,
            cid=cid,
        )

    def make_ask(
        self,
        content: str,
        *,
        kind: int = CONTENT_LITERAL,
        cid: int | None = None,
        qos: int = 0,
        deadline: int | None = None,
    ) -> Message:
        opts = [wire.opt_content_type(kind)]
        if deadline is not None:
            opts.append(wire.opt_deadline(deadline))
        return self.build(
            Verb.ASK,
            options=tuple(opts),
            payload=content.encode("utf-8"),
            qos=qos,
            cid=cid,
        )

    def make_observe(
        self, topic: str, *, cid: int | None = None, qos: int = 0
    ) -> Message:
        return self.build(
            Verb.OBSERVE, options=(wire.opt_topic(topic),), qos=qos, cid=cid
        )

    # -- resource accounting --------------------------------------------

    def _charge(self, msg: Message, kind: str, now: int) -> None:
        cost = self.model.cost_of(msg)
        try:
            self.budget = self.budget.charge(cost)
        except InfeasibleCharge as e:
            self.infeasible_count += 1
            raise Infeasible(str(e)) from e
        if self.journal is not None:
            self.journal.append(JournalEntry(now, kind, cost))

    def _remember(self, now: int, direction: str, size: int) -> None:
        self.history.append(HistoryEntry(now, direction, size))
        while len(self.history) > self.h_cap:
            evicted = self.history.popleft()
            refund = self.model.buffer_memory(evicted.size)
            self.budget = self.budget.refund(refund)
            if self.journal is not None:
                self.journal.append(JournalEntry(now, "refund", refund))

    # -- transitions -----------------------------------------------------

    def send(
        self, msg: Message, to: int, now: int, *, fresh: bool = True
    ) -> TransitionLabel:
        """Charge for and emit one message.  Raises Infeasible (with no
        state change) if the budget cannot cover it.

        fresh=False marks a retransmission: the bytes are charged and
        buffered again but timers are not re-registered.
        """
        if to == self.id:
            raise ValueError("use local handling for self-addressed messages")
        self._charge(msg, "send", now)
        self._remember(now, "out", msg.wire_size)
        h = msg.header
        if fresh:
            if h.qos >= 1 and not h.is_response:
                self.retransmits[h.correlation_id] = Retransmit(
                    to=to,
                    message=msg,
                    interval=self.retransmit_interval,
                    next_at=now + self.retransmit_interval,
                )
            if h.verb == Verb.ASK and msg.has(OptionType.CONTENT_TYPE):
                dl = msg.find(OptionType.DEADLINE)
                timeout = (
                    wire.decode_u32(dl.value) if dl else self.ask_timeout
                )
                self.pending_asks[h.correlation_id] = PendingAsk(
                    peer=to,
                    query=msg.payload.decode("utf-8", "replace"),
                    deadline=now + timeout,
                )
        return TransitionLabel(self.id, to, msg)

    def receive(
        self, msg: Message, sender: int, now: int
    ) -> list[tuple[int, Message]]:
        """Apply one inbound message.  Returns reply messages as
        (destination, message) pairs; the caller is responsible for
        sending them (each reply is charged at its own send)."""
        self._charge(msg, "receive", now)
        self._remember(now, "in", msg.wire_size)
        h = msg.header
        replies: list[tuple[int, Message]] = []

        if h.is_response:
            cid = h.correlation_id
            self.retransmits.pop(cid, None)
            if cid in self.pending_asks:
                del self.pending_asks[cid]
                self.answers.append((cid, msg))

        try:
            replies.extend(self._apply(msg, sender, now))
        except BadContent as e:
            if not h.is_response:
                replies.append((sender, self._error_reply(h, str(e))))

        if (
            h.qos >= 1
            and not h.is_response
            and not any(
                r.header.is_response
                and r.header.correlation_id == h.correlation_id
                for _, r in replies
            )
        ):
            replies.append(
                (
                    sender,
                    self.build(
                        Verb.PING,
                        flags=FLAG_RESPONSE,
                        cid=h.correlation_id,
                    ),
                )
            )
        return replies

    def handle_raw(
        self, data: bytes, sender: int, now: int
    ) -> list[tuple[int, Message]]:
        """Decode-and-receive; malformed bytes earn an error reply
        instead of an exception (budget permitting)."""
        try:
            msg = wire.decode(data)
        except wire.WireError as e:
            return [(sender, self._malformed_reply(str(e)))]
        return self.receive(msg, sender, now)

    def _apply(
        self, msg: Message, sender: int, now: int
    ) -> list[tuple[int, Message]]:
        h = msg.header
        verb = h.verb

        if verb == Verb.PING:
            if h.is_response or h.is_error:
                return []
            return [
                (
                    sender,
                    self.build(
                        Verb.PING, flags=FLAG_RESPONSE, cid=h.correlation_id
                    ),
                )
            ]

        if verb == Verb.TELL:
            ct = msg.find(OptionType.CONTENT_TYPE)
            if ct is not None and ct.value == bytes((CONTENT_LITERAL,)):
                self.kb_insert(self._payload_literal(msg))
            return []

        if verb == Verb.ASK:
            ct = msg.find(OptionType.CONTENT_TYPE)
            if ct is None:
                # Application-level request (consensus, negotiation);
                # the embedding decides the reply.
                return []
            if ct.value == bytes((CONTENT_LITERAL,)):
                query = self._payload_literal(msg)
                truth = self.kb_lookup(query.atom)
                if truth is None:
                    reply = self.build(
                        Verb.TELL,
                        options=(wire.opt_err("unknown"),),
                        payload=msg.payload,
                        flags=FLAG_RESPONSE,
                        cid=h.correlation_id,
                    )
                else:
                    reply = self.make_tell(
                        Literal(query.atom, truth).text(),
                        cid=h.correlation_id,
                        response=True,
                    )
                return [(sender, reply)]
            if ct.value == bytes((CONTENT_ACTION,)):
                action = msg.payload.decode("utf-8", "strict")
                if not action:
                    raise BadContent("empty action")
                done = f"done({action})"
                self.kb_insert_text(done)
                return [
                    (
                        sender,
                        self.make_tell(
                            done, cid=h.correlation_id, response=True
                        ),
                    )
                ]
            raise BadContent(f"unknown content type {ct.value.hex()}")

        if verb == Verb.OBSERVE:
            topic_opt = msg.find(OptionType.TOPIC)
            if topic_opt is None:
                raise BadContent("observe without a topic")
            topic = topic_opt.value.decode("utf-8", "strict")
            self.subscriptions.setdefault(topic, set()).add(sender)
            return []

        raise BadContent(f"verb {verb}")  # unreachable; enum is total

    def _payload_literal(self, msg: Message) -> Literal:
        try:
            text = msg.payload.decode("utf-8", "strict")
        except UnicodeDecodeError as e:
            raise BadContent(f"payload is not utf-8: {e}") from e
        return parse_literal(text)

    def _error_reply(self, h: wire.Header, detail: str) -> Message:
        return self.build(
            Verb.PING,
            options=(wire.opt_err(detail[:64]),),
            flags=FLAG_RESPONSE | FLAG_ERROR,
            cid=h.correlation_id,
        )

    def _malformed_reply(self, detail: str) -> Message:
        return self.build(
            Verb.PING,
            options=(wire.opt_err(detail[:64]),),
            flags=FLAG_RESPONSE | FLAG_ERROR,
        )

    # -- timers and publication ------------------------------------------

    def fire_timers(self, now: int) -> list[tuple[int, Message]]:
        """Expire overdue queries and collect due retransmissions.

        Returns (destination, message) pairs to resend; expired queries
        are recorded in self.timeouts rather than producing traffic.
        """
        for cid in sorted(self.pending_asks):
            pa = self.pending_asks[cid]
            if pa.deadline <= now:
                del self.pending_asks[cid]
                self.retransmits.pop(cid, None)
                self.timeouts.append((cid, pa.peer, pa.query))
        out: list[tuple[int, Message]] = []
        for cid in sorted(self.retransmits):
            rt = self.retransmits[cid]
            if rt.next_at <= now:
                rt.next_at = now + rt.interval
                rt.attempts += 1
                out.append((rt.to, rt.message))
        return out

    def publish(
        self,
        topic: str,
        literal_text: str,
        *,
        qos: int = 0,
        cid: int | None = None,
    ) -> list[tuple[int, Message]]:
        """Build exactly one notification per distinct subscriber of the
        topic, in ascending subscriber order.  All notifications of one
        publication share a correlation id."""
        subs = sorted(self.subscriptions.get(topic, ()))
        if cid is None:
            cid = self.fresh_cid()
        return [
            (
                peer,
                self.make_tell(literal_text, topic=topic, qos=qos, cid=cid),
            )
            for peer in subs
        ]

    # -- introspection ----------------------------------------------------

    def memory_level(self):
        """Currently held buffer memory according to the model."""
        total = 0
        for entry in self.history:
            total += entry.size
        return self.model.buffer_memory(total).memory
