"""Entropy accounting, Huffman optimality bounds, the encoder budget."""

import glob
import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muacp import compression as cz
from muacp import wire
from muacp.compression import (
    FIXED_FRAMING_BITS,
    HUFFMAN_SLACK_BITS,
    INDEX_BITS,
    CompressionError,
    DistEntry,
    MessageDistribution,
    build_tables,
    check_bound,
    entropy,
    huffman,
    joint_entropy,
    symbol_of,
)

V = wire.Verb


def uniform_verbs():
    return MessageDistribution(
        [DistEntry(v, (), b"", 0.25) for v in (V.PING, V.TELL, V.ASK, V.OBSERVE)]
    )


def dyadic_payloads():
    return MessageDistribution([
        DistEntry(V.TELL, (), b"a", 0.5),
        DistEntry(V.TELL, (), b"b", 0.25),
        DistEntry(V.TELL, (), b"c", 0.125),
        DistEntry(V.TELL, (), b"d", 0.125),
    ])


# -- entropy oracles ------------------------------------------------------------


def test_uniform_verbs_entropy_is_two_bits():
    rep = entropy(uniform_verbs())
    assert rep.h_verb == pytest.approx(2.0, abs=1e-12)
    assert rep.h_profile_given_verb == 0.0
    assert rep.h_payload_given_rest == 0.0
    assert rep.h_total == pytest.approx(2.0, abs=1e-12)


def test_degenerate_distribution_has_zero_entropy():
    d = MessageDistribution([DistEntry(V.PING, (), b"", 1.0)])
    assert entropy(d).h_total == 0.0
    assert joint_entropy(d) == 0.0


def test_dyadic_payload_entropy():
    rep = entropy(dyadic_payloads())
    assert rep.h_verb == 0.0
    assert rep.h_payload_given_rest == pytest.approx(1.75, abs=1e-12)
    assert rep.h_total == pytest.approx(1.75, abs=1e-12)


def test_conditional_decomposition_hand_numbers():
    # TELL splits over two profiles, ASK does not: H(O|V) = 0.5
    d = MessageDistribution([
        DistEntry(V.TELL, ((6, 1),), b"", 0.25),
        DistEntry(V.TELL, ((7, 2),), b"", 0.25),
        DistEntry(V.ASK, ((6, 1),), b"", 0.5),
    ])
    rep = entropy(d)
    assert rep.h_verb == pytest.approx(1.0, abs=1e-12)
    assert rep.h_profile_given_verb == pytest.approx(0.5, abs=1e-12)
    assert rep.h_payload_given_rest == 0.0


def _random_dist(rng: random.Random) -> MessageDistribution:
    n = rng.randint(1, 24)
    raw = [rng.random() + 1e-9 for _ in range(n)]
    total = sum(raw)
    entries = []
    used = set()
    for w in raw:
        while True:
            sym = (
                rng.randrange(4),
                tuple(
                    (rng.randrange(1, 10), rng.randrange(0, 10))
                    for _ in range(rng.randrange(3))
                ),
                bytes(rng.randrange(256) for _ in range(rng.randrange(6))),
            )
            if sym not in used:
                used.add(sym)
                break
        entries.append(DistEntry(sym[0], sym[1], sym[2], w / total))
    return MessageDistribution(entries)


@pytest.mark.parametrize("seed", range(10))
def test_chain_rule_matches_joint_entropy(seed):
    d = _random_dist(random.Random(seed))
    assert entropy(d).h_total == pytest.approx(joint_entropy(d), abs=1e-9)


# -- distribution model ---------------------------------------------------------


def test_probabilities_must_sum_to_one():
    with pytest.raises(CompressionError):
        MessageDistribution([DistEntry(V.PING, (), b"", 0.5)])


def test_duplicate_symbols_rejected():
    with pytest.raises(CompressionError):
        MessageDistribution([
            DistEntry(V.PING, (), b"", 0.5),
            DistEntry(V.PING, (), b"", 0.5),
        ])


def test_from_counts_and_symbol_of():
    m1 = wire.message(V.TELL, payload=b"x")
    m2 = wire.message(V.TELL, payload=b"x", message_id=9)  # same symbol
    m3 = wire.message(V.ASK, options=(wire.opt_content_type(1),))
    assert symbol_of(m1) == symbol_of(m2)
    d = MessageDistribution.from_messages([m1, m2, m3])
    probs = {e.symbol: e.prob for e in d.entries}
    assert probs[symbol_of(m1)] == pytest.approx(2 / 3)
    assert probs[symbol_of(m3)] == pytest.approx(1 / 3)


def test_from_wire_corpus_decodes():
    blobs = [wire.encode(wire.message(V.PING))] * 3
    d = MessageDistribution.from_wire_corpus(blobs)
    assert len(d.entries) == 1


def test_json_roundtrip(tmp_path):
    d = MessageDistribution([
        DistEntry(V.TELL, ((5, 9),), b"\xff", 0.5),
        DistEntry(V.PING, (), b"", 0.5),
    ])
    p = tmp_path / "d.json"
    p.write_text(json.dumps(d.to_json()))
    assert cz.load_distribution(str(p)).entries == d.entries


# -- huffman ------------------------------------------------------------------


def test_huffman_dyadic_codeword_lengths():
    t = huffman({"a": 0.5, "b": 0.25, "c": 0.125, "d": 0.125})
    lengths = {s: len(w) for s, w in t.codewords.items()}
    assert lengths == {"a": 1, "b": 2, "c": 3, "d": 3}
    assert t.kraft_sum == 1
    assert t.expected_length == pytest.approx(1.75)


def test_huffman_single_symbol_codes_zero_bits():
    t = huffman({"only": 1.0})
    assert t.codewords == {"only": ""}
    assert t.expected_length == 0.0


def test_huffman_prefix_free():
    t = huffman({f"s{i}": 1 + (i % 5) for i in range(17)})
    words = sorted(t.codewords.values())
    for i, w in enumerate(words):
        for other in words[i + 1:]:
            assert not other.startswith(w) or other == w


def test_huffman_deterministic_under_insertion_order():
    weights = {"x": 1.0, "y": 1.0, "z": 2.0}
    a = huffman(weights)
    b = huffman(dict(reversed(list(weights.items()))))
    assert a.codewords == b.codewords


@settings(max_examples=150)
@given(st.dictionaries(st.text("ab", min_size=1, max_size=6),
                       st.integers(1, 50), min_size=1, max_size=20))
def test_huffman_within_one_bit_of_entropy(weights):
    t = huffman(weights)
    assert t.kraft_sum <= 1
    assert t.expected_length >= t.entropy - 1e-9
    if len(weights) > 1:
        assert t.expected_length < t.entropy + 1


# -- the encoder bound ---------------------------------------------------------


def test_bound_constants():
    assert FIXED_FRAMING_BITS == 11 * 8
    assert INDEX_BITS == math.ceil(math.log2(wire.K_MAX)) == 4
    assert HUFFMAN_SLACK_BITS == 3


def test_bound_on_uniform_verbs_is_exact():
    rep = check_bound(uniform_verbs())
    assert rep.expected_code_bits == pytest.approx(2.0)
    assert rep.expected_total_bits == pytest.approx(88 + 4 + 2.0)
    assert rep.bound_bits == pytest.approx(2.0 + 88 + 4 + 3)
    assert rep.ok


def test_bound_across_fixture_files():
    paths = sorted(glob.glob("configs/distributions/*.json"))
    assert len(paths) >= 5
    for path in paths:
        rep = check_bound(cz.load_distribution(path))
        assert rep.ok, path
        assert rep.expected_code_bits <= rep.entropy_bits + 3 + 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_bound_on_random_distributions(seed):
    d = _random_dist(random.Random(1000 + seed))
    rep = check_bound(d)
    assert rep.ok
    # per-stage Huffman never beats the joint entropy
    assert rep.expected_code_bits >= rep.entropy_bits - 1e-9


def test_three_stage_tables_cover_support():
    d = _random_dist(random.Random(42))
    verb_table, profile_tables, payload_tables = build_tables(d)
    for e in d.entries:
        assert e.verb in verb_table.codewords
        assert e.profile in profile_tables[e.verb].codewords
        assert e.payload in payload_tables[(e.verb, e.profile)].codewords


def test_report_extras():
    d = MessageDistribution([
        DistEntry(V.TELL, ((6, 1),), b"", 0.5),
        DistEntry(V.TELL, (), b"", 0.5),
    ])
    rep = check_bound(d)
    assert rep.expected_option_count == pytest.approx(0.5)
    assert rep.refined_index_bits == pytest.approx(0.5 * INDEX_BITS)
    # expected wire bits: 0.5 * 11 bytes + 0.5 * (11 + 4) bytes
    assert rep.expected_wire_bits == pytest.approx((0.5 * 11 + 0.5 * 15) * 8)
