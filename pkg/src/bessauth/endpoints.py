"""Master and outstation session state machines.

The master (control server) builds challenges and verifies replies
against its copy of the cell-reply table; the outstation (DER device)
self-authenticates the challenged cells against their models, replies,
and advances its table.  Both endpoints speak plain 64-bit words and
byte payloads, so they run identically over the in-process driver and
the framed wire.

Every accepted round advances both tables through the same pack-state
digest, so the tables stay bit-identical in lockstep; any abort leaves
both tables untouched and the round retryable.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass

from .battery import Bess
from .crseq import (
    BessState,
    CellReplyTable,
    Challenge,
    TransformSpec,
    apply_transform,
    build_temp_reply,
    decode_challenge,
    encode_challenge,
    init_crt,
    quantize_bs,
    reverse_transform,
    split_temp_reply,
    update_crt,
)
from .ducm import Ducm, Tolerance
from .errors import ProtocolError, VoltageOutOfWindowError
from .gauge import MEASUREMENT_PERIOD_S, STREAM_AUTH, FuelGauge

__all__ = [
    "MasterState",
    "OutstationState",
    "AbortReason",
    "Abort",
    "Verdict",
    "EventLog",
    "MasterSession",
    "OutstationSession",
    "enroll",
]


class MasterState(enum.Enum):
    IDLE = "idle"
    ENROLLED = "enrolled"
    CHALLENGE_OUTSTANDING = "challenge_outstanding"
    VERIFIED = "verified"
    ABORTED = "aborted"


class OutstationState(enum.Enum):
    IDLE = "idle"
    ENROLLED = "enrolled"
    ABORTED = "aborted"


class AbortReason(enum.IntEnum):
    MALFORMED = 1   # challenge names a cell outside the pack
    GAUGE = 2       # challenged cell has no learning cycle
    AUTH = 3        # a challenged cell failed self-authentication
    WINDOW = 4      # a challenged cell is outside the voltage window
    DESYNC = 5      # verdict round mismatch or missing verdict


@dataclass(frozen=True)
class Abort:
    reason: AbortReason
    detail: str = ""


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    round: int
    command: bytes = b""


class EventLog:
    """Structured protocol trace: one JSON-serializable record per transition."""

    def __init__(self):
        self.records: list[dict] = []

    def log(self, round_: int, role: str, event: str, state: str, detail: str = "") -> None:
        self.records.append(
            {"round": round_, "role": role, "event": event, "state": state, "detail": detail})

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, separators=(",", ":")) for r in self.records)

    def events(self, event: str | None = None, role: str | None = None) -> list[dict]:
        out = self.records
        if event is not None:
            out = [r for r in out if r["event"] == event]
        if role is not None:
            out = [r for r in out if r["role"] == role]
        return out


class MasterSession:
    """Control-server side: challenge issue and reply verification."""

    def __init__(self, events: EventLog | None = None):
        self.crt: CellReplyTable | None = None
        self.state = MasterState.IDLE
        self.pending_challenge: Challenge | None = None
        self.round = 0
        self.events = events or EventLog()

    def _log(self, event: str, detail: str = "") -> None:
        self.events.log(self.round, "master", event, self.state.value, detail)

    @property
    def n_cells(self) -> int:
        if self.crt is None:
            raise ProtocolError("master not enrolled")
        return self.crt.n

    def receive_enrollment(self, payload: bytes) -> None:
        if self.state is not MasterState.IDLE:
            raise ProtocolError(f"cannot enroll in state {self.state.value}")
        self.crt = CellReplyTable.from_bytes(payload)
        self.round = self.crt.version
        self.state = MasterState.ENROLLED
        self._log("enrolled", f"n={self.crt.n}")

    def build_challenge(self, rng_seed: int) -> Challenge:
        """Sample a fresh challenge; the sets and transform come from the seed.

        The identity transform (no shift, zero mask) is excluded: it would
        hand out an untransformed reply, voiding the integrity check.
        """
        if self.state not in (MasterState.ENROLLED, MasterState.VERIFIED):
            raise ProtocolError(f"cannot issue challenge in state {self.state.value}")
        rng = random.Random(rng_seed)
        lset1 = tuple(rng.sample(range(self.n_cells), 4))
        lset2 = tuple(rng.sample(range(self.n_cells), 2))
        rt = TransformSpec(rng.randrange(32), rng.randrange(8), rng.randrange(256))
        while rt.shift_amount == 0 and rt.xor_mask == 0:
            rt = TransformSpec(rng.randrange(32), rng.randrange(8), rng.randrange(256))
        ch = Challenge(lset1, lset2, rt)
        self.pending_challenge = ch
        self.state = MasterState.CHALLENGE_OUTSTANDING
        self._log("challenge_sent", f"word={encode_challenge(ch):016x}")
        return ch

    def verify_reply(self, r_auth: int, command: bytes = b"") -> Verdict:
        """Reverse the transform, check every challenged reply, advance on match."""
        if self.state is not MasterState.CHALLENGE_OUTSTANDING or self.pending_challenge is None:
            raise ProtocolError(f"no challenge outstanding in state {self.state.value}")
        ch = self.pending_challenge
        r_temp = reverse_transform(r_auth & (2**64 - 1), ch.rt)
        bs, replies = split_temp_reply(r_temp)
        expected = tuple(self.crt.reply(c) for c in ch.lset1)
        self.pending_challenge = None
        if replies != expected:
            self.state = MasterState.ABORTED
            self._log("reject", "reply table mismatch")
            return Verdict(False, self.round)
        self.crt = update_crt(self.crt, bs)
        self.round += 1
        self.state = MasterState.VERIFIED
        self._log("accept", f"command authorized ({len(command)} bytes)")
        return Verdict(True, self.round, command)

    def receive_abort(self, abort: Abort) -> None:
        """Outstation could not answer; the round is void and retryable."""
        if self.state is not MasterState.CHALLENGE_OUTSTANDING:
            raise ProtocolError(f"unexpected abort in state {self.state.value}")
        self.pending_challenge = None
        self.state = MasterState.ENROLLED
        self._log("round_aborted", f"{abort.reason.name}: {abort.detail}")

    def reset(self) -> None:
        self.crt = None
        self.pending_challenge = None
        self.round = 0
        self.state = MasterState.IDLE
        self._log("reset")


class OutstationSession:
    """DER-device side: owns the pack, the gauge, and the cell models."""

    def __init__(self, bess: Bess, gauge: FuelGauge, models: dict[int, Ducm],
                 tolerance: Tolerance, events: EventLog | None = None,
                 clock: int = 0):
        self.bess = bess
        self.gauge = gauge
        self.models = models
        self.tolerance = tolerance
        self.crt: CellReplyTable | None = None
        self.state = OutstationState.IDLE
        self.round = 0
        self.clock = clock  # measurement-cycle index
        self.events = events or EventLog()

    def _log(self, event: str, detail: str = "") -> None:
        self.events.log(self.round, "outstation", event, self.state.value, detail)

    # -- enrollment ---------------------------------------------------------

    def make_enrollment(self, crt_seed: int) -> bytes:
        """Initialize the reply table and emit its wire form."""
        self.crt = init_crt(crt_seed, self.bess.n_cells)
        self.round = 0
        return self.crt.to_bytes()

    def enrollment_delivered(self) -> None:
        if self.crt is None:
            raise ProtocolError("no enrollment pending")
        if self.state is not OutstationState.IDLE:
            raise ProtocolError(f"cannot enroll in state {self.state.value}")
        self.state = OutstationState.ENROLLED
        self._log("enrolled", f"n={self.crt.n}")

    def enrollment_failed(self) -> None:
        """Transport failure: forget the table, stay Idle for a retry."""
        self.crt = None
        self._log("enroll_failed", "transport failure, staying idle")

    # -- measurement loop ---------------------------------------------------

    def advance_cycle(self) -> None:
        """One measurement cycle: step the pack, sample every cell, refresh
        the models that are due, recharge cells that hit the cutoff."""
        self.bess.step(MEASUREMENT_PERIOD_S)
        done = [int(c) for c in range(self.bess.n_cells) if self.bess.cycle_complete[c]]
        if done:
            self.bess.recharge(done)
            self._log("recharged", f"cells={done}")
        self.clock += 1
        learned = [c for c in range(self.bess.n_cells) if self.gauge.is_learned(c)]
        ms = self.gauge.measure(self.bess, learned, timestamp=self.clock)
        for m in ms:
            self.models[m.cell_id].refresh([m], now=self.clock)

    # -- authentication -----------------------------------------------------

    def handle_challenge(self, challenge_word: int) -> int | Abort:
        """Answer one challenge; on any check failing, abort without
        touching the reply table."""
        if self.state is not OutstationState.ENROLLED:
            raise ProtocolError(f"cannot handle challenge in state {self.state.value}")
        ch = decode_challenge(challenge_word)
        bad = [c for c in (*ch.lset1, *ch.lset2) if c >= self.bess.n_cells]
        if bad:
            self._log("abort", f"malformed challenge, cells {bad}")
            return Abort(AbortReason.MALFORMED, f"cell ids {bad} outside pack")
        unlearned = [c for c in (*ch.lset1, *ch.lset2) if not self.gauge.is_learned(c)]
        if unlearned:
            self._log("abort", f"unlearned cells {unlearned}")
            return Abort(AbortReason.GAUGE, f"cells {unlearned} not learned")

        for m in self.gauge.measure(self.bess, ch.lset1, timestamp=self.clock,
                                    stream=STREAM_AUTH):
            try:
                res = self.models[m.cell_id].check(m, self.tolerance)
            except VoltageOutOfWindowError as err:
                self._log("abort", f"cell {m.cell_id} out of window")
                return Abort(AbortReason.WINDOW, f"cell {m.cell_id}: {err}")
            if not res.passed:
                self._log("abort",
                          f"cell {m.cell_id} residual {res.residual_mah:.2f} mAh")
                return Abort(AbortReason.AUTH,
                             f"cell {m.cell_id} residual {res.residual_mah:.3f} mAh")

        lset2_ms = self.gauge.measure(self.bess, ch.lset2, timestamp=self.clock,
                                      stream=STREAM_AUTH)
        bs = quantize_bs(lset2_ms)
        r_temp = build_temp_reply(self.crt, ch, bs)
        r_auth = apply_transform(r_temp, ch.rt)
        self.crt = update_crt(self.crt, bs)
        self.round += 1
        self._log("reply_sent", f"word={r_auth:016x}")
        return r_auth

    def receive_verdict(self, verdict: Verdict | None) -> None:
        """Apply the master's verdict; anything but a matching accept kills
        the session (re-enrollment required)."""
        if verdict is None:
            self.state = OutstationState.ABORTED
            self._log("session_aborted", "verdict missing")
            return
        if not verdict.accepted or verdict.round != self.round:
            self.state = OutstationState.ABORTED
            self._log("session_aborted",
                      f"verdict accepted={verdict.accepted} round={verdict.round} "
                      f"local={self.round}")
            return
        self._log("verdict_ok", f"round={verdict.round}")

    def reset_for_enrollment(self) -> None:
        self.crt = None
        self.round = 0
        self.state = OutstationState.IDLE
        self._log("reset")


def enroll(master: MasterSession, outstation: OutstationSession, crt_seed: int,
           deliver: bool = True) -> None:
    """Direct in-process enrollment: the outstation shares its fresh table.

    deliver=False simulates a transport failure: both sides stay Idle.
    """
    if master.state is not MasterState.IDLE:
        raise ProtocolError(f"master cannot enroll in state {master.state.value}")
    if outstation.state is not OutstationState.IDLE:
        raise ProtocolError(f"outstation cannot enroll in state {outstation.state.value}")
    payload = outstation.make_enrollment(crt_seed)
    if not deliver:
        outstation.enrollment_failed()
        return
    master.receive_enrollment(payload)
    outstation.enrollment_delivered()
