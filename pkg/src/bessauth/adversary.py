"""Adversary-in-the-middle proxy for the framed wire.

The proxy sits between master and outstation and sees every frame in
both directions.  A policy decides what happens to each frame: passive
capture, bit tamper, substitution replay of a captured reply, or a
block.  Rollback is a state attack rather than a frame attack, so the
scenario driver stages it by restoring an old outstation session; the
policy here only marks the intent.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .framing import Frame, MsgType

__all__ = ["AdversaryMode", "AdversaryPolicy", "Adversary"]


class AdversaryMode(enum.Enum):
    PASSIVE = "passive"
    REPLAY = "replay"
    TAMPER = "tamper"
    BLOCK = "block"
    ROLLBACK = "rollback"


@dataclass
class AdversaryPolicy:
    mode: AdversaryMode = AdversaryMode.PASSIVE
    target_round: int = 1            # round the active behavior triggers on
    tamper_bit: int = 0              # REPLY payload bit index, 0 = MSB of byte 0
    block_type: MsgType = MsgType.VERDICT

    def validate(self) -> "AdversaryPolicy":
        if not 0 <= self.tamper_bit < 64:
            raise ValueError(f"tamper_bit must sit in [0, 64), got {self.tamper_bit}")
        return self


@dataclass
class Capture:
    round: int
    direction: str
    frame: Frame


class Adversary:
    """One proxy hop; deterministic, frame-at-a-time."""

    def __init__(self, policy: AdversaryPolicy | None = None, events=None):
        self.policy = (policy or AdversaryPolicy()).validate()
        self.capture_log: list[Capture] = []
        self.events = events

    def _log(self, round_: int, event: str, detail: str) -> None:
        if self.events is not None:
            self.events.log(round_, "adversary", event, self.policy.mode.value, detail)

    def process(self, frame: Frame, direction: str, round_: int) -> Frame | None:
        """Pass, mutate, substitute, or drop one frame.

        Enrollment frames always pass untouched: the enrollment exchange
        is assumed protected by the transport's initial handshake.
        """
        self.capture_log.append(Capture(round_, direction, frame))
        mode = self.policy.mode
        if frame.msg_type is MsgType.ENROLL_CRT or mode is AdversaryMode.PASSIVE:
            return frame
        if mode is AdversaryMode.ROLLBACK:
            return frame  # staged by the scenario driver, not per-frame

        if mode is AdversaryMode.TAMPER:
            if frame.msg_type is MsgType.REPLY and round_ == self.policy.target_round:
                flipped = bytearray(frame.payload)
                bit = self.policy.tamper_bit
                flipped[bit // 8] ^= 0x80 >> (bit % 8)
                self._log(round_, "tamper", f"flipped payload bit {bit}")
                return Frame(frame.msg_type, bytes(flipped))
            return frame

        if mode is AdversaryMode.REPLAY:
            if frame.msg_type is MsgType.REPLY:
                if round_ == self.policy.target_round:
                    return frame  # captured above; delivered honestly this round
                prior = [c for c in self.capture_log
                         if c.frame.msg_type is MsgType.REPLY
                         and c.round == self.policy.target_round]
                if prior and round_ == self.policy.target_round + 1:
                    self._log(round_, "replay",
                              f"substituted reply captured at round {prior[0].round}")
                    return prior[0].frame
            return frame

        if mode is AdversaryMode.BLOCK:
            if frame.msg_type is self.policy.block_type and round_ == self.policy.target_round:
                self._log(round_, "block", f"dropped {frame.msg_type.name}")
                return None
            return frame

        return frame
