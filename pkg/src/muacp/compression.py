"""Entropy analysis of message traffic and the compression bound.

A traffic distribution assigns probability to whole message shapes:
the verb, the option profile (the ordered tuple of (code, length)
pairs), and the payload bytes.  Its entropy decomposes by the chain
rule

    H = H(verb) + H(profile | verb) + H(payload | verb, profile)

and each factor gets its own Huffman code (one code per conditioning
context).  The theoretical encoder spends a fixed header budget, one
flat ceil(log2 k_max)-bit index for the option-type space, and the
three Huffman codes; since every Huffman code loses strictly less than
one bit to its entropy, the expected total is provably below

    H + header_bits + ceil(log2 k_max) + 3.

check_bound() evaluates both sides on a concrete distribution.  The
byte-aligned wire format's expected size is reported next to it; the
gap is the price of byte alignment and explicit length fields, and on
degenerate distributions (say, a single message repeated forever) it
can go negative because fixed framing still carries bits the entropy
code no longer needs.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .wire import HEADER_SIZE, K_MAX, Message, Verb, decode

HEADER_BITS = HEADER_SIZE * 8  # 64-bit header + count byte framing is
                               # charged separately below
#: Fixed per-message framing the theoretical encoder pays: the 64-bit
#: header plus the option-count and payload-length fields (8 + 16 bits).
FIXED_FRAMING_BITS = 88
INDEX_BITS = math.ceil(math.log2(K_MAX))
HUFFMAN_SLACK_BITS = 3

Profile = tuple[tuple[int, int], ...]


class CompressionError(Exception):
    pass


class EmptyCorpus(CompressionError):
    pass


@dataclass(frozen=True)
class DistEntry:
    verb: int
    profile: Profile
    payload: bytes
    prob: float

    @property
    def symbol(self) -> tuple:
        return (self.verb, self.profile, self.payload)

    @property
    def wire_bits(self) -> int:
        option_bytes = sum(3 + ln for _, ln in self.profile)
        return (HEADER_SIZE + 1 + option_bytes + 2 + len(self.payload)) * 8


class MessageDistribution:
    """A finite-support probability distribution over message shapes."""

    MAX_SUPPORT = 100_000
    PROB_TOL = 1e-9

    def __init__(self, entries: list[DistEntry]):
        if not entries:
            raise EmptyCorpus("distribution has no entries")
        if len(entries) > self.MAX_SUPPORT:
            raise CompressionError(
                f"support of {len(entries)} exceeds {self.MAX_SUPPORT}"
            )
        seen = set()
        for e in entries:
            if e.prob <= 0:
                raise CompressionError(f"nonpositive probability {e.prob}")
            Verb(e.verb)
            if e.symbol in seen:
                raise CompressionError(f"duplicate symbol {e.symbol}")
            seen.add(e.symbol)
        total = math.fsum(e.prob for e in entries)
        if abs(total - 1.0) > self.PROB_TOL:
            raise CompressionError(f"probabilities sum to {total!r}, not 1")
        self.entries = tuple(
            sorted(entries, key=lambda e: e.symbol)
        )

    def __len__(self) -> int:
        return len(self.entries)

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_counts(cls, counts: dict[tuple, int]) -> "MessageDistribution":
        total = sum(counts.values())
        if total <= 0:
            raise EmptyCorpus("no observations")
        return cls(
            [
                DistEntry(v, profile, payload, c / total)
                for (v, profile, payload), c in counts.items()
            ]
        )

    @classmethod
    def from_messages(cls, messages) -> "MessageDistribution":
        counts: dict[tuple, int] = {}
        for m in messages:
            key = symbol_of(m)
            counts[key] = counts.get(key, 0) + 1
        return cls.from_counts(counts)

    @classmethod
    def from_wire_corpus(cls, blobs) -> "MessageDistribution":
        return cls.from_messages(decode(b) for b in blobs)

    def to_json(self) -> dict:
        return {
            "entries": [
                {
                    "verb": Verb(e.verb).name,
                    "options": [list(p) for p in e.profile],
                    "payload_hex": e.payload.hex(),
                    "prob": e.prob,
                }
                for e in self.entries
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MessageDistribution":
        try:
            entries = [
                DistEntry(
                    verb=Verb[item["verb"]].value,
                    profile=tuple(
                        (int(c), int(ln)) for c, ln in item.get("options", [])
                    ),
                    payload=bytes.fromhex(item.get("payload_hex", "")),
                    prob=float(item["prob"]),
                )
                for item in obj["entries"]
            ]
        except (KeyError, ValueError, TypeError) as e:
            raise CompressionError(f"bad distribution: {e}") from e
        return cls(entries)


def symbol_of(m: Message) -> tuple:
    return (
        int(m.header.verb),
        tuple((o.code, len(o.value)) for o in m.options),
        m.payload,
    )


def load_distribution(path: str) -> MessageDistribution:
    with open(path, "r", encoding="utf-8") as fp:
        return MessageDistribution.from_json(json.load(fp))


# -- entropy -----------------------------------------------------------------


def _h(probs) -> float:
    return -math.fsum(p * math.log2(p) for p in probs if p > 0)


@dataclass(frozen=True)
class EntropyReport:
    h_verb: float
    h_profile_given_verb: float
    h_payload_given_rest: float

    @property
    def h_total(self) -> float:
        return (
            self.h_verb
            + self.h_profile_given_verb
            + self.h_payload_given_rest
        )


def entropy(dist: MessageDistribution) -> EntropyReport:
    """Chain-rule decomposition by direct summation (no sampling)."""
    p_verb: dict[int, float] = {}
    p_vo: dict[tuple, float] = {}
    for e in dist.entries:
        p_verb[e.verb] = p_verb.get(e.verb, 0.0) + e.prob
        key = (e.verb, e.profile)
        p_vo[key] = p_vo.get(key, 0.0) + e.prob

    h_v = _h(p_verb.values())

    h_o = 0.0
    for v, pv in sorted(p_verb.items()):
        cond = [
            p / pv for (vv, _), p in sorted(p_vo.items()) if vv == v
        ]
        h_o += pv * _h(cond)

    h_p = 0.0
    for (v, profile), pvo in sorted(p_vo.items()):
        cond = [
            e.prob / pvo
            for e in dist.entries
            if e.verb == v and e.profile == profile
        ]
        h_p += pvo * _h(cond)

    return EntropyReport(h_v, h_o, h_p)


def joint_entropy(dist: MessageDistribution) -> float:
    """Entropy of the full joint distribution; equals the chain-rule
    total up to floating point, which the tests pin down."""
    return _h(e.prob for e in dist.entries)


# -- Huffman coding -----------------------------------------------------------


@dataclass(frozen=True)
class HuffmanTable:
    codewords: dict
    expected_length: float
    entropy: float

    @property
    def kraft_sum(self) -> Fraction:
        return sum(
            (Fraction(1, 2 ** len(w)) for w in self.codewords.values()),
            Fraction(0),
        )


def huffman(weights: dict) -> HuffmanTable:
    """Optimal prefix code with deterministic tie-breaking (ties merge
    in sorted-symbol insertion order).  A single-symbol alphabet gets
    the empty codeword: zero bits carry zero information."""
    if not weights:
        raise CompressionError("empty alphabet")
    syms = sorted(weights)
    total = math.fsum(weights.values())
    probs = {s: weights[s] / total for s in syms}
    codes = {s: "" for s in syms}
    if len(syms) > 1:
        heap: list[tuple[float, int, list]] = []
        for i, s in enumerate(syms):
            heap.append((probs[s], i, [s]))
        heapq.heapify(heap)
        stamp = len(syms)
        while len(heap) > 1:
            w0, _, group0 = heapq.heappop(heap)
            w1, _, group1 = heapq.heappop(heap)
            for s in group0:
                codes[s] = "0" + codes[s]
            for s in group1:
                codes[s] = "1" + codes[s]
            heapq.heappush(heap, (w0 + w1, stamp, group0 + group1))
            stamp += 1
    expected = math.fsum(probs[s] * len(codes[s]) for s in syms)
    return HuffmanTable(
        codewords=codes,
        expected_length=expected,
        entropy=_h(probs.values()),
    )


# -- the bound ---------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    entropy_bits: float
    fixed_framing_bits: int
    index_bits: int
    expected_code_bits: float     # the three Huffman stages together
    expected_total_bits: float    # framing + index + code
    bound_bits: float             # H + framing + index + slack
    expected_option_count: float
    refined_index_bits: float     # E[option count] * index_bits, reported
    expected_wire_bits: float     # actual byte-aligned format
    alignment_slack_bits: float   # wire - theoretical (can be negative
                                  # on degenerate distributions)
    tables: int

    @property
    def ok(self) -> bool:
        return self.expected_total_bits <= self.bound_bits + 1e-6

    def to_json(self) -> dict:
        return {
            "entropy_bits": self.entropy_bits,
            "fixed_framing_bits": self.fixed_framing_bits,
            "index_bits": self.index_bits,
            "expected_code_bits": self.expected_code_bits,
            "expected_total_bits": self.expected_total_bits,
            "bound_bits": self.bound_bits,
            "bound_holds": self.ok,
            "expected_option_count": self.expected_option_count,
            "refined_index_bits": self.refined_index_bits,
            "expected_wire_bits": self.expected_wire_bits,
            "alignment_slack_bits": self.alignment_slack_bits,
            "huffman_tables": self.tables,
        }


def build_tables(
    dist: MessageDistribution,
) -> tuple[HuffmanTable, dict, dict]:
    """One verb table, one profile table per verb, one payload table
    per (verb, profile) context."""
    p_verb: dict[int, float] = {}
    for e in dist.entries:
        p_verb[e.verb] = p_verb.get(e.verb, 0.0) + e.prob
    verb_table = huffman(p_verb)

    profile_tables: dict[int, HuffmanTable] = {}
    payload_tables: dict[tuple, HuffmanTable] = {}
    for v in sorted(p_verb):
        weights: dict[Profile, float] = {}
        for e in dist.entries:
            if e.verb == v:
                weights[e.profile] = weights.get(e.profile, 0.0) + e.prob
        profile_tables[v] = huffman(weights)
        for profile in sorted(weights):
            pay = {
                e.payload: e.prob
                for e in dist.entries
                if e.verb == v and e.profile == profile
            }
            payload_tables[(v, profile)] = huffman(pay)
    return verb_table, profile_tables, payload_tables


def check_bound(
    dist: MessageDistribution,
    *,
    fixed_framing_bits: int = FIXED_FRAMING_BITS,
    index_bits: int = INDEX_BITS,
    slack_bits: int = HUFFMAN_SLACK_BITS,
) -> BoundReport:
    """Evaluate the expected compressed size against the entropy bound."""
    rep = entropy(dist)
    verb_table, profile_tables, payload_tables = build_tables(dist)

    p_verb: dict[int, float] = {}
    p_vo: dict[tuple, float] = {}
    for e in dist.entries:
        p_verb[e.verb] = p_verb.get(e.verb, 0.0) + e.prob
        p_vo[(e.verb, e.profile)] = (
            p_vo.get((e.verb, e.profile), 0.0) + e.prob
        )

    code_bits = verb_table.expected_length
    for v, pv in sorted(p_verb.items()):
        code_bits += pv * profile_tables[v].expected_length
    for (v, profile), pvo in sorted(p_vo.items()):
        code_bits += pvo * payload_tables[(v, profile)].expected_length

    e_k = math.fsum(e.prob * len(e.profile) for e in dist.entries)
    wire_bits = math.fsum(e.prob * e.wire_bits for e in dist.entries)
    expected_total = fixed_framing_bits + index_bits + code_bits
    return BoundReport(
        entropy_bits=rep.h_total,
        fixed_framing_bits=fixed_framing_bits,
        index_bits=index_bits,
        expected_code_bits=code_bits,
        expected_total_bits=expected_total,
        bound_bits=rep.h_total + fixed_framing_bits + index_bits + slack_bits,
        expected_option_count=e_k,
        refined_index_bits=e_k * index_bits,
        expected_wire_bits=wire_bits,
        alignment_slack_bits=wire_bits - expected_total,
        tables=1 + len(profile_tables) + len(payload_tables),
    )
