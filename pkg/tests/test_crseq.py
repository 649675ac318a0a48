"""Codec tests checked against an independent string-based bit packer."""

import random

import pytest

from bessauth.crseq import (
    BessState,
    CellReplyTable,
    Challenge,
    TransformSpec,
    apply_transform,
    build_temp_reply,
    crseq_csv_line,
    decode_challenge,
    encode_challenge,
    init_crt,
    quantize_bs,
    reverse_transform,
    split_temp_reply,
    update_crt,
)


# --- independent oracle -----------------------------------------------------
# Everything below packs/rotates via decimal-to-bit-string conversion and has
# no shared code with the codec under test.

def oracle_pack(fields):
    """fields: list of (value, n_bits), most significant field first."""
    bits = "".join(format(v, f"0{n}b") for v, n in fields)
    assert len(bits) == 64
    return int(bits, 2)


def oracle_rotl(word, k):
    s = format(word, "064b")
    k %= 64
    return int(s[k:] + s[:k], 2)


def oracle_rotr(word, k):
    s = format(word, "064b")
    k %= 64
    return int(s[-k:] + s[:-k], 2) if k else word


def oracle_rotl8(byte, k):
    s = format(byte, "08b")
    k %= 8
    return int(s[k:] + s[:k], 2)


class FakeMeasurement:
    def __init__(self, soc_percent, voltage):
        self.soc_percent = soc_percent
        self.voltage = voltage


def make_challenge(lset1=(1, 2, 3, 4), lset2=(5, 6), shift=3, direction=0b001, mask=0xAB):
    return Challenge(tuple(lset1), tuple(lset2), TransformSpec(shift, direction, mask))


# --- challenge codec ---------------------------------------------------------

def test_encode_all_zero_fields_is_zero_word():
    ch = Challenge((0, 1, 2, 3), (0, 1), TransformSpec(0, 0, 0))
    # not literally zero (ids must be distinct), so check the rt half only
    assert encode_challenge(ch) & 0xFFFF == 0
    # the all-zero word decodes to duplicate ids, which Challenge refuses
    with pytest.raises(ValueError):
        decode_challenge(0)


def test_encode_known_challenge_matches_hand_packed_word():
    ch = make_challenge()
    expected = oracle_pack(
        [(1, 8), (2, 8), (3, 8), (4, 8), (5, 8), (6, 8), (3, 5), (0b001, 3), (0xAB, 8)]
    )
    assert expected == 0x01020304_0506_19AB
    assert encode_challenge(ch) == expected


def test_challenge_roundtrip_random_sample():
    rng = random.Random(2024)
    for _ in range(20_000):
        lset1 = tuple(rng.sample(range(256), 4))
        lset2 = tuple(rng.sample(range(256), 2))
        rt = TransformSpec(rng.randrange(32), rng.randrange(8), rng.randrange(256))
        ch = Challenge(lset1, lset2, rt)
        assert decode_challenge(encode_challenge(ch)) == ch


def test_challenge_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        Challenge((1, 1, 2, 3), (4, 5), TransformSpec(0, 0, 0))
    with pytest.raises(ValueError):
        Challenge((1, 2, 3, 4), (5, 5), TransformSpec(0, 0, 0))


def test_transform_spec_field_packing():
    rt = TransformSpec(31, 7, 0xFF)
    assert rt.as_word16() == 0xFFFF
    assert TransformSpec.from_word16(0xFFFF) == rt
    assert TransformSpec.from_word16(0x19AB) == TransformSpec(3, 1, 0xAB)


# --- pack-state quantization -------------------------------------------------

def test_quantize_lower_bounds():
    bs = quantize_bs([FakeMeasurement(0.0, 3.45), FakeMeasurement(0.0, 3.45)])
    assert bs.digest_bytes() == (0x00, 0x00, 0x00, 0x00)


def test_quantize_upper_bounds():
    bs = quantize_bs([FakeMeasurement(100.0, 4.00), FakeMeasurement(100.0, 4.00)])
    assert bs.digest_bytes() == (0xFF, 0xFF, 0xFF, 0xFF)


def test_quantize_midpoint_rounds_half_up():
    # 50% -> 127.5 -> 128; 3.725 V is mid-window -> 127.5 -> 128
    bs = quantize_bs([FakeMeasurement(50.0, 3.725), FakeMeasurement(50.0, 3.725)])
    assert bs.digest_bytes() == (0x80, 0x80, 0x80, 0x80)


def test_quantize_clips_out_of_window_values():
    bs = quantize_bs([FakeMeasurement(120.0, 4.2), FakeMeasurement(-3.0, 3.1)])
    assert bs.digest_bytes() == (0xFF, 0xFF, 0x00, 0x00)


def test_bess_state_word_roundtrip():
    bs = BessState((0x12, 0x34), (0x56, 0x78))
    assert BessState.from_word32(bs.as_word32()) == bs
    assert bs.as_word32() == 0x12563478


# --- cell-reply table --------------------------------------------------------

def test_init_crt_is_deterministic():
    assert init_crt(42, 100) == init_crt(42, 100)


def test_init_crt_differs_between_seeds():
    assert init_crt(0, 100) != init_crt(1, 100)


def test_init_crt_covers_all_cell_ids():
    crt = init_crt(7, 100)
    assert crt.n == 100
    assert crt.version == 0
    for cid in range(100):
        assert 0 <= crt.reply(cid) < 256


def test_init_crt_rejects_empty():
    with pytest.raises(ValueError):
        init_crt(0, 0)


def test_crt_wire_roundtrip():
    crt = init_crt(3, 100)
    again = CellReplyTable.from_bytes(crt.to_bytes())
    assert again == crt


# --- temp reply --------------------------------------------------------------

def test_temp_reply_zero_inputs_give_zero_word():
    crt = CellReplyTable((0,) * 10)
    ch = Challenge((0, 1, 2, 3), (4, 5), TransformSpec(0, 0, 0))
    bs = BessState((0, 0), (0, 0))
    assert build_temp_reply(crt, ch, bs) == 0


def test_temp_reply_matches_hand_packed_word():
    crt = CellReplyTable((0xAA, 0xBB, 0xCC, 0xDD, 0, 0))
    ch = Challenge((0, 1, 2, 3), (4, 5), TransformSpec(0, 0, 0))
    bs = BessState((0x10, 0x30), (0x20, 0x40))
    expected = oracle_pack(
        [(0x10, 8), (0x20, 8), (0x30, 8), (0x40, 8),
         (0xAA, 8), (0xBB, 8), (0xCC, 8), (0xDD, 8)]
    )
    assert expected == 0x10203040_AABBCCDD
    assert build_temp_reply(crt, ch, bs) == expected


def test_temp_reply_single_reply_changes_single_byte():
    base = list(range(6))
    ch = Challenge((0, 1, 2, 3), (4, 5), TransformSpec(0, 0, 0))
    bs = BessState((9, 9), (9, 9))
    w0 = build_temp_reply(CellReplyTable(tuple(base)), ch, bs)
    base[2] ^= 0x5A
    w1 = build_temp_reply(CellReplyTable(tuple(base)), ch, bs)
    diff = w0 ^ w1
    assert diff == (0x5A << 8)  # third lset1 slot sits at bits 15..8


def test_temp_reply_unknown_cell_raises():
    crt = CellReplyTable((1, 2, 3))
    ch = Challenge((0, 1, 2, 9), (0, 1), TransformSpec(0, 0, 0))
    with pytest.raises(KeyError):
        build_temp_reply(crt, ch, BessState((0, 0), (0, 0)))


def test_split_temp_reply_inverts_build():
    crt = init_crt(11, 32)
    ch = Challenge((4, 9, 2, 30), (7, 8), TransformSpec(5, 2, 0x3C))
    bs = BessState((0x41, 0x42), (0x43, 0x44))
    bs2, replies = split_temp_reply(build_temp_reply(crt, ch, bs))
    assert bs2 == bs
    assert replies == tuple(crt.reply(c) for c in ch.lset1)


# --- transform ---------------------------------------------------------------

def test_transform_identity_when_no_shift_no_mask():
    for direction in range(8):
        rt = TransformSpec(0, direction, 0)
        assert apply_transform(0x0123456789ABCDEF, rt) == 0x0123456789ABCDEF


def test_transform_zero_word_full_mask():
    rt = TransformSpec(17, 5, 0xFF)
    assert apply_transform(0, rt) == 0xFFFF_FFFF_FFFF_FFFF


def test_transform_matches_rotation_oracle():
    rng = random.Random(99)
    for _ in range(5_000):
        w = rng.getrandbits(64)
        rt = TransformSpec(rng.randrange(32), rng.randrange(8), rng.randrange(256))
        mask = rt.xor_mask * 0x0101010101010101
        if bin(rt.direction_field).count("1") % 2 == 1:
            expected = oracle_rotl(w, rt.shift_amount) ^ mask
        else:
            expected = oracle_rotr(w, rt.shift_amount) ^ mask
        assert apply_transform(w, rt) == expected


def test_transform_roundtrip_random_sample():
    rng = random.Random(123)
    for _ in range(20_000):
        w = rng.getrandbits(64)
        rt = TransformSpec(rng.randrange(32), rng.randrange(8), rng.randrange(256))
        assert reverse_transform(apply_transform(w, rt), rt) == w


def test_transform_roundtrip_byte_mode():
    rng = random.Random(321)
    for _ in range(5_000):
        w = rng.getrandbits(64)
        rt = TransformSpec(rng.randrange(32), rng.randrange(8), rng.randrange(256))
        assert reverse_transform(apply_transform(w, rt, mode="bytes"), rt, mode="bytes") == w


def test_transform_byte_mode_matches_per_byte_oracle():
    rng = random.Random(555)
    for _ in range(2_000):
        w = rng.getrandbits(64)
        rt = TransformSpec(rng.randrange(32), rng.randrange(8), rng.randrange(256))
        k = rt.shift_amount % 8
        if bin(rt.direction_field).count("1") % 2 == 0:
            k = (8 - k) % 8
        rotated = 0
        for s in range(56, -8, -8):
            rotated = (rotated << 8) | oracle_rotl8((w >> s) & 0xFF, k)
        assert apply_transform(w, rt, mode="bytes") == rotated ^ (rt.xor_mask * 0x0101010101010101)


# --- table update ------------------------------------------------------------

def test_update_with_zero_digest_keeps_replies_bumps_version():
    crt = init_crt(5, 100)
    crt2 = update_crt(crt, BessState((0, 0), (0, 0)))
    assert crt2.replies == crt.replies
    assert crt2.version == crt.version + 1


def test_update_with_ff_digest_is_pure_xor():
    # digest 0xFF has popcount 8, so the rotation degenerates to identity
    crt = CellReplyTable(tuple(range(256)))
    crt2 = update_crt(crt, BessState((0xFF, 0x00), (0x00, 0x00)))
    assert crt2.replies == tuple(r ^ 0xFF for r in range(256))


def test_update_matches_byte_oracle():
    rng = random.Random(777)
    crt = init_crt(15, 100)
    for _ in range(200):
        bs = BessState(
            (rng.randrange(256), rng.randrange(256)),
            (rng.randrange(256), rng.randrange(256)),
        )
        b = 0
        for byte in bs.digest_bytes():
            b ^= byte
        k = bin(b).count("1") % 8
        expected = tuple(oracle_rotl8(r ^ b, k) for r in crt.replies)
        crt = update_crt(crt, bs)
        assert crt.replies == expected


def test_identical_updates_keep_tables_synchronized():
    rng = random.Random(31337)
    a = init_crt(9, 100)
    b = init_crt(9, 100)
    for _ in range(500):
        bs = BessState(
            (rng.randrange(256), rng.randrange(256)),
            (rng.randrange(256), rng.randrange(256)),
        )
        a, b = update_crt(a, bs), update_crt(b, bs)
        assert a == b


def test_reply_differs_whenever_pack_state_bytes_differ():
    crt = init_crt(1, 100)
    ch = make_challenge()
    bs1 = BessState((10, 20), (30, 40))
    bs2 = BessState((10, 21), (30, 40))
    r1 = apply_transform(build_temp_reply(crt, ch, bs1), ch.rt)
    r2 = apply_transform(build_temp_reply(crt, ch, bs2), ch.rt)
    assert r1 != r2


def test_csv_line_format():
    line = crseq_csv_line(0x0102030405060708, 0xF0E0D0C0B0A09080)
    assert line == "0102030405060708,f0e0d0c0b0a09080"
    assert len(line) == 33
