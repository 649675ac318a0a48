import random

import pytest

from bessauth.battery import PackConfig
from bessauth.crseq import encode_challenge, reverse_transform
from bessauth.ducm import Tolerance
from bessauth.endpoints import (
    Abort,
    AbortReason,
    MasterSession,
    MasterState,
    OutstationState,
    enroll,
)
from bessauth.errors import ProtocolError
from bessauth.gauge import GaugeConfig
from bessauth.harness import ScenarioConfig, build_endpoints


def quiet_config(**kw) -> ScenarioConfig:
    """Small pack, noise-free gauge: every honest round accepts."""
    base = dict(n_cells=16, warmup_cycles=400,
                gauge=GaugeConfig(soc_noise_pp=0.0, volt_noise_rel=0.0))
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture()
def pair():
    master, outstation = build_endpoints(quiet_config())
    enroll(master, outstation, crt_seed=3)
    return master, outstation


def run_round(master, outstation, seed):
    ch = master.build_challenge(seed)
    outstation.advance_cycle()
    answer = outstation.handle_challenge(encode_challenge(ch))
    assert not isinstance(answer, Abort), answer
    verdict = master.verify_reply(answer)
    outstation.receive_verdict(verdict)
    return ch, answer, verdict


# --- enrollment ---------------------------------------------------------------

def test_enroll_synchronizes_tables(pair):
    master, outstation = pair
    assert master.crt == outstation.crt
    assert master.crt.version == 0
    assert master.state is MasterState.ENROLLED
    assert outstation.state is OutstationState.ENROLLED


def test_double_enroll_rejected(pair):
    master, outstation = pair
    with pytest.raises(ProtocolError):
        enroll(master, outstation, crt_seed=4)


def test_enroll_transport_failure_keeps_idle_then_retry():
    master, outstation = build_endpoints(quiet_config())
    enroll(master, outstation, crt_seed=3, deliver=False)
    assert master.state is MasterState.IDLE
    assert outstation.state is OutstationState.IDLE
    enroll(master, outstation, crt_seed=3)
    assert master.crt == outstation.crt


# --- challenge builder ----------------------------------------------------------

def test_challenge_requires_enrollment():
    master = MasterSession()
    with pytest.raises(ProtocolError):
        master.build_challenge(1)


def test_challenge_fields_valid_over_many_draws(pair):
    master, _ = pair
    rng = random.Random(0)
    words = set()
    for _ in range(1000):
        ch = master.build_challenge(rng.getrandbits(48))
        assert len(set(ch.lset1)) == 4
        assert len(set(ch.lset2)) == 2
        assert all(c < 16 for c in (*ch.lset1, *ch.lset2))
        words.add(encode_challenge(ch))
        master.state = MasterState.ENROLLED  # rewind the outstanding state
        master.pending_challenge = None
    assert len(words) >= 999  # at most one collision over 1000 seeded draws


def test_lset1_distinct_in_large_sample(pair):
    master, _ = pair
    for seed in range(2000):
        ch = master.build_challenge(seed)
        assert len(set(ch.lset1)) == 4
        master.state = MasterState.ENROLLED
        master.pending_challenge = None


# --- happy path / lockstep -------------------------------------------------------

def test_roundtrip_accepts_and_stays_lockstep(pair):
    master, outstation = pair
    for k in range(1, 21):
        run_round(master, outstation, seed=k * 977)
        assert master.round == outstation.round == k
        assert master.crt == outstation.crt
        assert master.crt.version == k


def test_command_echoed_on_accept(pair):
    master, outstation = pair
    ch = master.build_challenge(5)
    outstation.advance_cycle()
    answer = outstation.handle_challenge(encode_challenge(ch))
    verdict = master.verify_reply(answer, command=b"\x10\x20")
    assert verdict.accepted
    assert verdict.command == b"\x10\x20"


# --- abort paths -----------------------------------------------------------------

def test_malformed_challenge_aborts_without_update(pair):
    master, outstation = pair
    before = outstation.crt
    ch = master.build_challenge(5)
    word = encode_challenge(ch) | (255 << 56)  # first lset1 id -> 255
    answer = outstation.handle_challenge(word)
    assert isinstance(answer, Abort)
    assert answer.reason is AbortReason.MALFORMED
    assert outstation.crt == before
    master.receive_abort(answer)
    assert master.state is MasterState.ENROLLED
    run_round(master, outstation, seed=11)  # retry succeeds


def test_unlearned_cell_aborts_with_gauge_reason(pair):
    master, outstation = pair
    outstation.gauge.learned_capacity.pop(7)
    for seed in range(50):
        ch = master.build_challenge(seed)
        if 7 not in (*ch.lset1, *ch.lset2):
            master.receive_abort(Abort(AbortReason.DESYNC, "skip"))
            continue
        outstation.advance_cycle()
        answer = outstation.handle_challenge(encode_challenge(ch))
        assert isinstance(answer, Abort)
        assert answer.reason is AbortReason.GAUGE
        return
    pytest.fail("no challenge drew cell 7")


def test_frozen_models_eventually_abort_on_drift():
    """A stalled model refresh process must fail the challenge once the
    cell has drifted: 5000 measurement cycles at a 5 A load span several
    recharge cycles of accumulated drift."""
    cfg = quiet_config(
        pack=PackConfig(load_ma=5000.0),
        gauge=GaugeConfig(),          # default instrument noise
        update_interval=10**9,        # refresh process stalled after bootstrap
        tolerance=Tolerance(tau_mah=1.0),
        warmup_cycles=0,
    )
    master, outstation = build_endpoints(cfg)
    enroll(master, outstation, crt_seed=3)
    for _ in range(5000):
        outstation.advance_cycle()
    aborts = 0
    for seed in range(10):
        ch = master.build_challenge(seed * 31 + 7)
        answer = outstation.handle_challenge(encode_challenge(ch))
        if isinstance(answer, Abort):
            assert answer.reason in (AbortReason.AUTH, AbortReason.WINDOW)
            aborts += 1
            master.receive_abort(answer)
        else:
            outstation.receive_verdict(master.verify_reply(answer))
    assert aborts >= 8  # drift dominates; nearly every attempt must fail


def test_no_update_on_abort_enables_retry(pair):
    master, outstation = pair
    m_before, o_before = master.crt, outstation.crt
    ch = master.build_challenge(5)
    answer = outstation.handle_challenge(encode_challenge(ch) | (255 << 56))
    master.receive_abort(answer)
    assert master.crt == m_before
    assert outstation.crt == o_before
    ch, reply, verdict = run_round(master, outstation, seed=77)
    assert verdict.accepted


# --- verification ------------------------------------------------------------------

def test_verify_without_pending_challenge_rejected(pair):
    master, _ = pair
    with pytest.raises(ProtocolError):
        master.verify_reply(0)


def test_single_bit_flips_in_reply_word(pair):
    """Every flip that lands in the table-reply half after the reverse
    transform must be rejected; flips landing in the pack-state half may
    verify but desynchronize the next round."""
    master, outstation = pair
    run_round(master, outstation, seed=1)
    for bit in range(64):
        ch = master.build_challenge(1000 + bit)
        outstation.advance_cycle()
        answer = outstation.handle_challenge(encode_challenge(ch))
        assert not isinstance(answer, Abort)
        flipped = answer ^ (1 << bit)
        lands_low = reverse_transform(flipped, ch.rt) ^ reverse_transform(answer, ch.rt)
        verdict = master.verify_reply(flipped)
        if lands_low & 0xFFFFFFFF:
            assert not verdict.accepted, f"bit {bit} altered a table reply"
        # re-synchronize both sides for the next probe
        master.crt = outstation.crt
        master.round = outstation.round
        master.state = MasterState.VERIFIED
        master.pending_challenge = None


def test_replayed_reply_rejected(pair):
    master, outstation = pair
    ch1, reply1, _ = run_round(master, outstation, seed=55)
    ch2 = master.build_challenge(56)
    outstation.advance_cycle()
    _ = outstation.handle_challenge(encode_challenge(ch2))
    verdict = master.verify_reply(reply1)   # adversary substitutes the old reply
    assert not verdict.accepted
    assert master.state is MasterState.ABORTED


def test_desync_verdict_aborts_outstation(pair):
    master, outstation = pair
    ch = master.build_challenge(5)
    outstation.advance_cycle()
    answer = outstation.handle_challenge(encode_challenge(ch))
    verdict = master.verify_reply(answer)
    from bessauth.endpoints import Verdict
    outstation.receive_verdict(Verdict(verdict.accepted, verdict.round + 3))
    assert outstation.state is OutstationState.ABORTED


def test_missing_verdict_aborts_outstation(pair):
    master, outstation = pair
    ch = master.build_challenge(5)
    outstation.advance_cycle()
    answer = outstation.handle_challenge(encode_challenge(ch))
    master.verify_reply(answer)
    outstation.receive_verdict(None)
    assert outstation.state is OutstationState.ABORTED


def test_event_log_structure(pair):
    master, outstation = pair
    run_round(master, outstation, seed=5)
    records = master.events.records
    assert all(set(r) == {"round", "role", "event", "state", "detail"} for r in records)
    assert master.events.events(event="accept", role="master")
    assert master.events.events(event="reply_sent", role="outstation")
