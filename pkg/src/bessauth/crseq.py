"""Bit-exact challenge/reply codec and the shared cell-reply table.

All protocol words are 64-bit unsigned integers packed big-endian
(most significant field first):

    challenge   [63..32] four 8-bit lset1 cell ids
                [31..16] two 8-bit lset2 cell ids
                [15..0]  transform spec: 5-bit shift, 3-bit direction
                         field, 8-bit XOR mask
    temp reply  [63..32] pack-state digest bytes of the lset2 cells
                         (soc, volt per cell, in challenge order)
                [31..0]  the four 8-bit table replies of lset1,
                         in challenge order
    auth reply  transform(temp reply)

The transform rotates the whole 64-bit word cyclically (direction from
the parity of the 3-bit direction field, odd = left) and XORs the 8-bit
mask replicated across all eight bytes.  Everything here is a pure
function over value types.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

__all__ = [
    "MASK64",
    "CellReplyTable",
    "Challenge",
    "TransformSpec",
    "BessState",
    "init_crt",
    "encode_challenge",
    "decode_challenge",
    "quantize_bs",
    "build_temp_reply",
    "apply_transform",
    "reverse_transform",
    "update_crt",
    "crseq_csv_line",
]

MASK64 = (1 << 64) - 1

# Quantization window for the voltage byte of the pack-state digest.
VOLT_WINDOW = (3.45, 4.00)


def _round_half_up(x: float) -> int:
    # round(0.5) would give 0 under banker's rounding; both endpoints
    # must agree on half-way cases, so pin the rule explicitly.
    return int(x + 0.5) if x >= 0 else -int(-x + 0.5)


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _rotl64(word: int, k: int) -> int:
    k %= 64
    return ((word << k) | (word >> (64 - k))) & MASK64 if k else word


def _rotr64(word: int, k: int) -> int:
    return _rotl64(word, (64 - k) % 64)


def _rotl8(byte: int, k: int) -> int:
    k %= 8
    return ((byte << k) | (byte >> (8 - k))) & 0xFF if k else byte


@dataclass(frozen=True)
class TransformSpec:
    """Reply-transform parameters carried in the low 16 challenge bits."""

    shift_amount: int      # 5 bits, cyclic positions
    direction_field: int   # 3 bits, odd popcount = rotate left
    xor_mask: int          # 8 bits, replicated across the word

    def __post_init__(self):
        if not 0 <= self.shift_amount < 32:
            raise ValueError(f"shift_amount out of range: {self.shift_amount}")
        if not 0 <= self.direction_field < 8:
            raise ValueError(f"direction_field out of range: {self.direction_field}")
        if not 0 <= self.xor_mask < 256:
            raise ValueError(f"xor_mask out of range: {self.xor_mask}")

    @property
    def rotate_left(self) -> bool:
        return _popcount(self.direction_field) % 2 == 1

    def as_word16(self) -> int:
        return (self.shift_amount << 11) | (self.direction_field << 8) | self.xor_mask

    @classmethod
    def from_word16(cls, word: int) -> "TransformSpec":
        return cls((word >> 11) & 0x1F, (word >> 8) & 0x07, word & 0xFF)


@dataclass(frozen=True)
class Challenge:
    """One 64-bit challenge: cells to authenticate, cells to sample, transform."""

    lset1: tuple[int, int, int, int]
    lset2: tuple[int, int]
    rt: TransformSpec

    def __post_init__(self):
        if len(self.lset1) != 4 or len(set(self.lset1)) != 4:
            raise ValueError(f"lset1 must hold 4 distinct ids: {self.lset1}")
        if len(self.lset2) != 2 or len(set(self.lset2)) != 2:
            raise ValueError(f"lset2 must hold 2 distinct ids: {self.lset2}")
        for cid in (*self.lset1, *self.lset2):
            if not 0 <= cid < 256:
                raise ValueError(f"cell id not an 8-bit value: {cid}")


def encode_challenge(ch: Challenge) -> int:
    word = 0
    for cid in ch.lset1:
        word = (word << 8) | cid
    for cid in ch.lset2:
        word = (word << 8) | cid
    return (word << 16) | ch.rt.as_word16()


def decode_challenge(word: int) -> Challenge:
    if not 0 <= word <= MASK64:
        raise ValueError(f"challenge word out of 64-bit range: {word:#x}")
    lset1 = tuple((word >> s) & 0xFF for s in (56, 48, 40, 32))
    lset2 = tuple((word >> s) & 0xFF for s in (24, 16))
    return Challenge(lset1, lset2, TransformSpec.from_word16(word & 0xFFFF))


@dataclass(frozen=True)
class BessState:
    """Quantized live pack state of the two lset2 cells, 4 bytes total."""

    soc_bytes: tuple[int, int]
    volt_bytes: tuple[int, int]

    def digest_bytes(self) -> tuple[int, int, int, int]:
        """Wire order: (soc, volt) for lset2[0], then lset2[1]."""
        return (self.soc_bytes[0], self.volt_bytes[0],
                self.soc_bytes[1], self.volt_bytes[1])

    def as_word32(self) -> int:
        b = self.digest_bytes()
        return (b[0] << 24) | (b[1] << 16) | (b[2] << 8) | b[3]

    @classmethod
    def from_word32(cls, word: int) -> "BessState":
        b = [(word >> s) & 0xFF for s in (24, 16, 8, 0)]
        return cls((b[0], b[2]), (b[1], b[3]))


def quantize_bs(measurements) -> BessState:
    """Quantize two (soc, voltage) measurements into the 4-byte pack state.

    soc maps [0, 100] % onto a byte; voltage maps the nominal operating
    window onto a byte.  Values outside the windows clip silently (the
    caller flags them in telemetry if it cares).
    """
    if len(measurements) != 2:
        raise ValueError(f"pack state needs exactly 2 measurements, got {len(measurements)}")
    lo, hi = VOLT_WINDOW
    socs, volts = [], []
    for m in measurements:
        socs.append(min(255, max(0, _round_half_up(m.soc_percent * 255.0 / 100.0))))
        volts.append(min(255, max(0, _round_half_up((m.voltage - lo) / (hi - lo) * 255.0))))
    return BessState((socs[0], socs[1]), (volts[0], volts[1]))


@dataclass(frozen=True)
class CellReplyTable:
    """The synchronized table of per-cell 8-bit replies.

    Both endpoints hold a copy; every accepted round rewrites all replies
    through `update_crt`, so a captured table goes stale after one round.
    """

    replies: tuple[int, ...]   # indexed by cell id
    version: int = 0

    def __post_init__(self):
        if not self.replies:
            raise ValueError("table must hold at least one entry")
        for r in self.replies:
            if not 0 <= r < 256:
                raise ValueError(f"reply not an 8-bit value: {r}")

    @property
    def n(self) -> int:
        return len(self.replies)

    def reply(self, cell_id: int) -> int:
        if not 0 <= cell_id < self.n:
            raise KeyError(f"unknown cell id {cell_id} (table holds {self.n})")
        return self.replies[cell_id]

    def to_bytes(self) -> bytes:
        """Wire form: u16 count, u32 version, then (cell_id, reply) pairs."""
        out = bytearray()
        out += self.n.to_bytes(2, "big")
        out += (self.version & 0xFFFFFFFF).to_bytes(4, "big")
        for cid, r in enumerate(self.replies):
            out += bytes((cid & 0xFF, r))
        return bytes(out)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "CellReplyTable":
        if len(payload) < 6:
            raise ValueError("table payload too short")
        n = int.from_bytes(payload[0:2], "big")
        version = int.from_bytes(payload[2:6], "big")
        if len(payload) != 6 + 2 * n:
            raise ValueError(f"table payload length {len(payload)} != {6 + 2 * n}")
        replies = [0] * n
        for i in range(n):
            cid, r = payload[6 + 2 * i], payload[7 + 2 * i]
            if cid != i & 0xFF:
                raise ValueError(f"table entry {i} carries cell id {cid}")
            replies[i] = r
        return cls(tuple(replies), version)


def init_crt(seed: int, n: int) -> CellReplyTable:
    """Fresh table with pseudo-random replies, one entry per cell id 0..n-1."""
    if n < 1:
        raise ValueError(f"table size must be positive, got {n}")
    if n > 256:
        raise ValueError(f"cell ids are 8-bit, table size {n} too large")
    rng = random.Random(seed)
    return CellReplyTable(tuple(rng.getrandbits(8) for _ in range(n)), version=0)


def build_temp_reply(crt: CellReplyTable, ch: Challenge, bs: BessState) -> int:
    """Pack the temporary reply: pack state high, lset1 table replies low."""
    word = bs.as_word32()
    for cid in ch.lset1:
        if not 0 <= cid < crt.n:
            raise KeyError(f"challenge names cell {cid} outside table of {crt.n}")
        word = (word << 8) | crt.replies[cid]
    return word


def split_temp_reply(r_temp: int) -> tuple[BessState, tuple[int, int, int, int]]:
    """Inverse of build_temp_reply: (pack state, four lset1 replies)."""
    bs = BessState.from_word32((r_temp >> 32) & 0xFFFFFFFF)
    replies = tuple((r_temp >> s) & 0xFF for s in (24, 16, 8, 0))
    return bs, replies


def apply_transform(r_temp: int, rt: TransformSpec, mode: str = "word") -> int:
    """Rotate then mask: the reversible transform guarding reply integrity.

    mode="word" rotates the full 64-bit word (default).  mode="bytes"
    rotates each of the eight bytes independently, kept for
    experimentation with the per-reply reading of the shift field.
    """
    if mode == "word":
        rotated = _rotl64(r_temp, rt.shift_amount) if rt.rotate_left \
            else _rotr64(r_temp, rt.shift_amount)
    elif mode == "bytes":
        k = rt.shift_amount % 8
        if not rt.rotate_left:
            k = (8 - k) % 8
        rotated = 0
        for s in range(56, -8, -8):
            rotated = (rotated << 8) | _rotl8((r_temp >> s) & 0xFF, k)
    else:
        raise ValueError(f"unknown transform mode {mode!r}")
    return rotated ^ (rt.xor_mask * 0x0101010101010101)


def reverse_transform(r_auth: int, rt: TransformSpec, mode: str = "word") -> int:
    """Exact inverse of apply_transform for every input word."""
    unmasked = r_auth ^ (rt.xor_mask * 0x0101010101010101)
    if mode == "word":
        return _rotr64(unmasked, rt.shift_amount) if rt.rotate_left \
            else _rotl64(unmasked, rt.shift_amount)
    if mode == "bytes":
        k = rt.shift_amount % 8
        if rt.rotate_left:
            k = (8 - k) % 8
        word = 0
        for s in range(56, -8, -8):
            word = (word << 8) | _rotl8((unmasked >> s) & 0xFF, k)
        return word
    raise ValueError(f"unknown transform mode {mode!r}")


def update_crt(crt: CellReplyTable, bs: BessState) -> CellReplyTable:
    """Advance the table one round using the live pack state.

    Digest b = XOR of the four pack-state bytes; every reply is XORed
    with b and rotated left by popcount(b) mod 8.  Both endpoints apply
    this with the same pack state, so the tables stay synchronized.
    """
    b = 0
    for byte in bs.digest_bytes():
        b ^= byte
    k = _popcount(b) % 8
    replies = tuple(_rotl8(r ^ b, k) for r in crt.replies)
    return CellReplyTable(replies, crt.version + 1)


def crseq_csv_line(challenge_word: int, reply_word: int) -> str:
    """One exported challenge-reply record: two 16-digit hex fields."""
    return f"{challenge_word:016x},{reply_word:016x}"
