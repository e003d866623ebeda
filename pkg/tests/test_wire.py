"""Codec: exact byte oracles, limit enforcement, roundtrip properties."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muacp import wire
from muacp.wire import (
    CLAUSES,
    Header,
    Message,
    Option,
    OptionType,
    Verb,
    WireError,
    decode,
    encode,
    message,
    validate,
)

# -- hand-computed byte oracles -----------------------------------------------

# version 1, verb PING, qos 0 -> 0x10; all other fields zero.
PING_HEX = "10" + "00" + "0000" + "0000" + "0000" + "00" + "0000"

# version 1, verb TELL (0b01), qos 0 -> 0x14; one VALUE option of 9 bytes.
TELL_HEX = (
    "14" + "00" + "0000" + "0000" + "0000"
    + "01"                     # option count
    + "05" + "0009" + "000102030405060708"
    + "0000"                   # payload length
)

# version 1, verb ASK (0b10), qos 1 -> 0x19; flags RESPONSE; mid 0x0102,
# seq 3, cid 9; CONTENT_TYPE literal option; payload "hi".
ASK_HEX = (
    "19" + "01" + "0102" + "0003" + "0009"
    + "01"
    + "06" + "0001" + "01"
    + "0002" + "6869"
)


def test_empty_ping_is_eleven_bytes():
    blob = encode(message(Verb.PING))
    assert blob == bytes.fromhex(PING_HEX)
    assert len(blob) == 11
    assert wire.MIN_MESSAGE_SIZE == 11


def test_tell_with_nine_byte_option_is_twenty_three_bytes():
    m = message(Verb.TELL, options=(Option(OptionType.VALUE, bytes(range(9))),))
    blob = encode(m)
    assert blob == bytes.fromhex(TELL_HEX)
    assert len(blob) == 23


def test_ask_oracle_field_for_field():
    m = message(
        Verb.ASK,
        qos=1,
        flags=wire.FLAG_RESPONSE,
        message_id=0x0102,
        sequence=3,
        correlation_id=9,
        options=(wire.opt_content_type(wire.CONTENT_LITERAL),),
        payload=b"hi",
    )
    assert encode(m) == bytes.fromhex(ASK_HEX)
    back = decode(bytes.fromhex(ASK_HEX))
    assert back.header.verb == Verb.ASK
    assert back.header.qos == 1
    assert back.header.is_response and not back.header.is_error
    assert back.header.message_id == 0x0102
    assert back.header.sequence == 3
    assert back.header.correlation_id == 9
    assert back.options == (Option(6, b"\x01"),)
    assert back.payload == b"hi"


def test_decode_inverts_encode_on_oracles():
    for hx in (PING_HEX, TELL_HEX, ASK_HEX):
        assert encode(decode(bytes.fromhex(hx))) == bytes.fromhex(hx)


def test_verb_bit_positions():
    for verb, b0 in ((Verb.PING, 0x10), (Verb.TELL, 0x14),
                     (Verb.ASK, 0x18), (Verb.OBSERVE, 0x1C)):
        assert encode(message(verb))[0] == b0


def test_qos_occupies_low_bits():
    assert encode(message(Verb.PING, qos=3))[0] == 0x13


def test_duplicate_options_preserved_in_order():
    opts = (
        Option(OptionType.BALLOT, b"\x00" * 8),
        Option(OptionType.BALLOT, b"\x01" * 8),
    )
    back = decode(encode(message(Verb.TELL, options=opts)))
    assert back.options == opts
    assert [o.value for o in back.find_all(OptionType.BALLOT)] == [
        b"\x00" * 8, b"\x01" * 8
    ]


# -- structural limits ----------------------------------------------------------


def test_option_count_cap():
    opts = tuple(Option(1, b"") for _ in range(255))
    m = message(Verb.PING, options=opts)
    assert decode(encode(m)) == m
    with pytest.raises(wire.TooManyOptions):
        message(Verb.PING, options=opts + (Option(1, b""),))


def test_option_value_limit_is_section_minus_head():
    assert wire.OPTION_VALUE_LIMIT == wire.OPTIONS_LIMIT - 3
    m = message(Verb.PING, options=(Option(1, b"x" * 1021),))
    assert decode(encode(m)) == m
    with pytest.raises(wire.OversizedOptions):
        Option(1, b"x" * 1022)


def test_options_aggregate_limit():
    # two 511-byte values: 2 * (3 + 511) = 1028 > 1024
    opts = (Option(1, b"a" * 511), Option(2, b"b" * 511))
    with pytest.raises(wire.OversizedOptions):
        message(Verb.PING, options=opts)


def test_payload_limit():
    m = message(Verb.TELL, payload=b"p" * 0xFFFF)
    assert decode(encode(m)) == m
    with pytest.raises(wire.OversizedPayload):
        message(Verb.TELL, payload=b"p" * 0x10000)


def test_header_field_ranges():
    with pytest.raises(wire.FieldRange):
        Header(verb=Verb.PING, qos=4)
    with pytest.raises(wire.FieldRange):
        Header(verb=Verb.PING, message_id=0x10000)
    with pytest.raises(wire.FieldRange):
        Header(verb=Verb.PING, flags=256)


# -- well-formedness clauses ----------------------------------------------------

GOOD = bytes.fromhex(PING_HEX)


def _mutate(blob: bytes, index: int, value: int) -> bytes:
    b = bytearray(blob)
    b[index] = value
    return bytes(b)


# clause -> (well-formed bytes, violating bytes)
CLAUSE_FIXTURES = {
    "header": (GOOD, _mutate(GOOD, 0, 0x20)),          # version 2
    "verb": (GOOD, GOOD),                              # see below: total on wire
    "option": (
        bytes.fromhex(TELL_HEX),
        bytes.fromhex("1000000000000000" + "01" + "05ffff" + "0000"),
    ),
    "options-size": (
        encode(message(Verb.PING, options=(Option(1, b"x" * 1021),))),
        bytes.fromhex("1000000000000000" + "02")
        + bytes([5, 2, 0]) + b"\x00" * 512
        + bytes([5, 2, 0]) + b"\x00" * 512
        + b"\x00\x00",
    ),
    "payload": (
        encode(message(Verb.TELL, payload=b"hello")),
        GOOD + b"\xee",                                 # trailing byte
    ),
    "count-cap": (
        encode(message(Verb.PING, options=(Option(1, b""),) * 255)),
        None,                                           # unreachable on wire
    ),
}


def test_every_clause_has_fixtures():
    assert set(CLAUSE_FIXTURES) == set(CLAUSES)


@pytest.mark.parametrize("clause", sorted(CLAUSE_FIXTURES))
def test_clause_pass_fixture(clause):
    good, _bad = CLAUSE_FIXTURES[clause]
    assert validate(good) == []


@pytest.mark.parametrize(
    "clause",
    [c for c, (_, bad) in sorted(CLAUSE_FIXTURES.items()) if bad is not None
     and c != "verb"],
)
def test_clause_fail_fixture_flags_exactly_that_clause(clause):
    _good, bad = CLAUSE_FIXTURES[clause]
    got = validate(bad)
    assert got, f"expected a violation for clause {clause}"
    assert {v.clause for v in got} == {clause}


def test_verb_clause_total_on_wire_but_checked_on_values():
    # every 2-bit pattern is a verb, so no byte string violates the
    # verb clause; the field-level checker still owns it.
    v = wire.check_wellformed(
        version=1, verb=5, qos=0, flags=0, message_id=0, sequence=0,
        correlation_id=0, options=[], payload=b"",
    )
    assert [x.clause for x in v] == ["verb"]


def test_count_cap_field_level():
    v = wire.check_wellformed(
        version=1, verb=0, qos=0, flags=0, message_id=0, sequence=0,
        correlation_id=0, options=[(1, b"")] * 256, payload=b"",
    )
    assert "count-cap" in {x.clause for x in v}


def test_multiple_violations_reported_together():
    v = wire.check_wellformed(
        version=3, verb=7, qos=0, flags=0, message_id=0, sequence=0,
        correlation_id=0, options=[], payload=b"",
    )
    assert {x.clause for x in v} == {"header", "verb"}


# -- properties -------------------------------------------------------------

option_st = st.builds(
    Option,
    st.integers(0, 255),
    st.binary(max_size=24),
)

message_st = st.builds(
    message,
    st.sampled_from(list(Verb)),
    qos=st.integers(0, 3),
    flags=st.integers(0, 255),
    message_id=st.integers(0, 0xFFFF),
    sequence=st.integers(0, 0xFFFF),
    correlation_id=st.integers(0, 0xFFFF),
    options=st.lists(option_st, max_size=8).map(tuple),
    payload=st.binary(max_size=128),
)


@settings(max_examples=300)
@given(message_st)
def test_roundtrip(m):
    blob = encode(m)
    assert len(blob) == m.wire_size
    assert decode(blob) == m
    assert validate(blob) == []


@settings(max_examples=300)
@given(st.binary(max_size=64))
def test_arbitrary_bytes_never_crash(blob):
    try:
        m = decode(blob)
    except WireError:
        assert validate(blob) != []
    else:
        assert encode(m) == blob


@given(message_st, st.binary(min_size=1, max_size=4))
def test_trailing_bytes_rejected(m, junk):
    with pytest.raises(wire.LengthMismatch):
        decode(encode(m) + junk)


@given(message_st)
def test_truncations_rejected(m):
    blob = encode(m)
    for cut in range(len(blob)):
        with pytest.raises(WireError):
            decode(blob[:cut])


def test_option_helpers_roundtrip():
    assert wire.decode_u32(wire.opt_cid(0xDEADBEEF).value) == 0xDEADBEEF
    assert wire.opt_topic("alerts").value == b"alerts"
    assert wire.opt_deadline(500).value == bytes.fromhex("000001f4")
    with pytest.raises(WireError):
        wire.decode_u32(b"\x00")
