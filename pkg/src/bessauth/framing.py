"""Framed wire protocol: the minimal transport the endpoints speak.

Frame layout, big-endian throughout:

    magic     2 bytes   0xDE 0xA7
    msg_type  1 byte    see MsgType
    length    2 bytes   payload byte count
    payload   length bytes

CHALLENGE and REPLY payloads are exactly the 8 protocol-word bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .endpoints import Abort, AbortReason, Verdict
from .errors import MalformedFrameError

__all__ = [
    "MAGIC",
    "MsgType",
    "Frame",
    "encode_frame",
    "decode_frame",
    "word_frame",
    "verdict_frame",
    "abort_frame",
    "decode_verdict",
    "decode_abort",
]

MAGIC = b"\xde\xa7"


class MsgType(enum.IntEnum):
    ENROLL_CRT = 0x01
    CHALLENGE = 0x02
    REPLY = 0x03
    VERDICT = 0x04
    ABORT = 0x05


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    payload: bytes


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > 0xFFFF:
        raise MalformedFrameError(f"payload too long: {len(frame.payload)}")
    if frame.msg_type in (MsgType.CHALLENGE, MsgType.REPLY) and len(frame.payload) != 8:
        raise MalformedFrameError(
            f"{frame.msg_type.name} payload must be 8 bytes, got {len(frame.payload)}")
    return MAGIC + bytes([frame.msg_type]) + len(frame.payload).to_bytes(2, "big") + frame.payload


def decode_frame(data: bytes) -> Frame:
    if len(data) < 5:
        raise MalformedFrameError(f"frame too short: {len(data)} bytes")
    if data[:2] != MAGIC:
        raise MalformedFrameError(f"bad magic {data[:2].hex()}")
    try:
        msg_type = MsgType(data[2])
    except ValueError:
        raise MalformedFrameError(f"unknown msg_type 0x{data[2]:02x}") from None
    length = int.from_bytes(data[3:5], "big")
    payload = data[5:]
    if len(payload) != length:
        raise MalformedFrameError(f"length field {length} != payload {len(payload)}")
    if msg_type in (MsgType.CHALLENGE, MsgType.REPLY) and length != 8:
        raise MalformedFrameError(f"{msg_type.name} payload must be 8 bytes, got {length}")
    return Frame(msg_type, payload)


def word_frame(msg_type: MsgType, word: int) -> Frame:
    return Frame(msg_type, int(word).to_bytes(8, "big"))


def verdict_frame(v: Verdict) -> Frame:
    payload = bytes([1 if v.accepted else 0]) + v.round.to_bytes(4, "big") + v.command
    return Frame(MsgType.VERDICT, payload)


def decode_verdict(frame: Frame) -> Verdict:
    if frame.msg_type is not MsgType.VERDICT or len(frame.payload) < 5:
        raise MalformedFrameError("not a verdict frame")
    return Verdict(
        accepted=frame.payload[0] == 1,
        round=int.from_bytes(frame.payload[1:5], "big"),
        command=frame.payload[5:],
    )


def abort_frame(a: Abort) -> Frame:
    return Frame(MsgType.ABORT, bytes([int(a.reason)]) + a.detail.encode("utf-8"))


def decode_abort(frame: Frame) -> Abort:
    if frame.msg_type is not MsgType.ABORT or len(frame.payload) < 1:
        raise MalformedFrameError("not an abort frame")
    return Abort(AbortReason(frame.payload[0]), frame.payload[1:].decode("utf-8"))
