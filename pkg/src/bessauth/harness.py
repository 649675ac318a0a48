"""Scenario driver: endpoints over the framed wire with an adversary hop.

Everything is configured through an INI file (`key = value` under
[pack], [gauge], [ducm], [protocol], [adversary], [experiment]); any
unknown section or key is a startup error naming the offender.  A
scenario run is fully deterministic given the config and seed, down to
the byte content of its event log.
"""

from __future__ import annotations

import configparser
import random
from dataclasses import dataclass, field, fields, replace

from .adversary import Adversary, AdversaryMode, AdversaryPolicy
from .battery import PackConfig, create_pack
from .crseq import crseq_csv_line, encode_challenge
from .ducm import Ducm, Tolerance
from .endpoints import (
    Abort,
    AbortReason,
    EventLog,
    MasterSession,
    MasterState,
    OutstationSession,
    OutstationState,
    enroll,
)
from .errors import ConfigError
from .experiments import reliability_sweep
from .framing import (
    Frame,
    MsgType,
    abort_frame,
    decode_abort,
    decode_frame,
    decode_verdict,
    encode_frame,
    verdict_frame,
    word_frame,
)
from .gauge import FuelGauge, GaugeConfig

__all__ = ["ScenarioConfig", "load_config", "build_endpoints", "run_session",
           "SessionResult", "export_crseq_dataset", "run_sweep"]


@dataclass
class ScenarioConfig:
    pack_seed: int = 0
    n_cells: int = 100
    pack: PackConfig = field(default_factory=PackConfig)
    gauge_seed: int | None = None          # derived from pack seed when unset
    gauge: GaugeConfig = field(default_factory=GaugeConfig)
    bucket_mah: float = 10.0
    update_interval: int = 1
    tolerance: Tolerance = field(default_factory=Tolerance)
    rounds: int = 10
    challenge_seed: int = 1
    crt_seed: int = 2
    warmup_cycles: int = 400
    command: bytes = b"\xa1"
    enroll_drop_first: bool = False
    # dataset export: authentication rounds arrive much faster than the
    # 2 s gauge cadence, so many rounds share one measurement cycle
    export_rounds_per_cycle: int = 1000
    adversary: AdversaryPolicy = field(default_factory=AdversaryPolicy)
    # experiment section
    n_measurements: int = 10_000
    seeds: tuple[int, ...] = tuple(range(10))
    intervals: tuple[int, ...] = (1, 10, 100, 1000)
    taus: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, pack_seed=seed)


_PACK_KEYS = {f.name for f in fields(PackConfig)} | {"seed", "n_cells"}
_GAUGE_KEYS = {f.name for f in fields(GaugeConfig)} | {"noise_seed"}
_DUCM_KEYS = {"bucket_mah", "update_interval", "tau_mah", "volt_gate_mv"}
_PROTOCOL_KEYS = {"rounds", "challenge_seed", "crt_seed", "warmup_cycles",
                  "command", "enroll_drop_first", "export_rounds_per_cycle"}
_ADVERSARY_KEYS = {"mode", "target_round", "tamper_bit", "block_type"}
_EXPERIMENT_KEYS = {"n_measurements", "seeds", "intervals", "taus"}
_SECTIONS = {
    "pack": _PACK_KEYS,
    "gauge": _GAUGE_KEYS,
    "ducm": _DUCM_KEYS,
    "protocol": _PROTOCOL_KEYS,
    "adversary": _ADVERSARY_KEYS,
    "experiment": _EXPERIMENT_KEYS,
}


def _convert(section: str, key: str, raw: str, to):
    try:
        return to(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {err}") from None


def load_config(path: str | None = None, text: str | None = None) -> ScenarioConfig:
    """Parse the INI config; every value is validated with its location."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            if not parser.read(path):
                raise ConfigError(f"config file not found: {path}")
    except configparser.Error as err:
        raise ConfigError(f"config parse error: {err}") from None

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    cfg = ScenarioConfig()

    def get(section, key, to, default):
        if parser.has_option(section, key):
            return _convert(section, key, parser.get(section, key), to)
        return default

    def get_bool(section, key, default):
        if parser.has_option(section, key):
            try:
                return parser.getboolean(section, key)
            except ValueError:
                raise ConfigError(f"[{section}] {key}: expected a boolean") from None
        return default

    pack_kwargs = {}
    for f in fields(PackConfig):
        if parser.has_option("pack", f.name):
            pack_kwargs[f.name] = _convert("pack", f.name, parser.get("pack", f.name),
                                           float if f.type == "float" else int)
    pack = PackConfig(**pack_kwargs).validate() if pack_kwargs else PackConfig()

    gauge_kwargs = {}
    if parser.has_option("gauge", "soc_noise_pp"):
        gauge_kwargs["soc_noise_pp"] = get("gauge", "soc_noise_pp", float, 0.0)
    if parser.has_option("gauge", "volt_noise_rel"):
        gauge_kwargs["volt_noise_rel"] = get("gauge", "volt_noise_rel", float, 0.0)
    if parser.has_option("gauge", "soc_noise_mode"):
        gauge_kwargs["soc_noise_mode"] = parser.get("gauge", "soc_noise_mode").strip()
    gauge = GaugeConfig(**gauge_kwargs).validate() if gauge_kwargs else GaugeConfig()

    volt_gate = None
    if parser.has_option("ducm", "volt_gate_mv"):
        raw = parser.get("ducm", "volt_gate_mv").strip()
        if raw:
            volt_gate = _convert("ducm", "volt_gate_mv", raw, float)

    mode_raw = get("adversary", "mode", str, "passive").strip().lower()
    try:
        mode = AdversaryMode(mode_raw)
    except ValueError:
        raise ConfigError(f"[adversary] mode: unknown mode {mode_raw!r}") from None
    block_raw = get("adversary", "block_type", str, "VERDICT").strip().upper()
    try:
        block_type = MsgType[block_raw]
    except KeyError:
        raise ConfigError(f"[adversary] block_type: unknown frame type {block_raw!r}") from None

    command_raw = get("protocol", "command", str, "a1").strip()
    try:
        command = bytes.fromhex(command_raw.removeprefix("0x"))
    except ValueError:
        raise ConfigError(f"[protocol] command: expected hex bytes, got {command_raw!r}") from None

    def int_list(section, key, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        return tuple(_convert(section, key, item.strip(), int)
                     for item in raw.split(",") if item.strip())

    def float_list(section, key, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        return tuple(_convert(section, key, item.strip(), float)
                     for item in raw.split(",") if item.strip())

    return replace(
        cfg,
        pack_seed=get("pack", "seed", int, cfg.pack_seed),
        n_cells=get("pack", "n_cells", int, cfg.n_cells),
        pack=pack,
        gauge_seed=get("gauge", "noise_seed", int, None),
        gauge=gauge,
        bucket_mah=get("ducm", "bucket_mah", float, cfg.bucket_mah),
        update_interval=get("ducm", "update_interval", int, cfg.update_interval),
        tolerance=Tolerance(get("ducm", "tau_mah", float, 1.0), volt_gate),
        rounds=get("protocol", "rounds", int, cfg.rounds),
        challenge_seed=get("protocol", "challenge_seed", int, cfg.challenge_seed),
        crt_seed=get("protocol", "crt_seed", int, cfg.crt_seed),
        warmup_cycles=get("protocol", "warmup_cycles", int, cfg.warmup_cycles),
        command=command,
        enroll_drop_first=get_bool("protocol", "enroll_drop_first", False),
        export_rounds_per_cycle=get("protocol", "export_rounds_per_cycle", int,
                                    cfg.export_rounds_per_cycle),
        adversary=AdversaryPolicy(
            mode=mode,
            target_round=get("adversary", "target_round", int, 1),
            tamper_bit=get("adversary", "tamper_bit", int, 0),
            block_type=block_type,
        ).validate(),
        n_measurements=get("experiment", "n_measurements", int, cfg.n_measurements),
        seeds=int_list("experiment", "seeds", cfg.seeds),
        intervals=int_list("experiment", "intervals", cfg.intervals),
        taus=float_list("experiment", "taus", cfg.taus),
    )


def build_endpoints(cfg: ScenarioConfig, events: EventLog | None = None):
    """Assemble a learned, bootstrapped, warmed-up outstation and a master."""
    events = events or EventLog()
    pack = create_pack(cfg.pack_seed, cfg.n_cells, cfg.pack)
    gauge_seed = cfg.gauge_seed if cfg.gauge_seed is not None else cfg.pack_seed ^ 0x6A09E667
    gauge = FuelGauge(gauge_seed, cfg.gauge)
    traces = gauge.learn_all(pack)
    models = {
        cid: Ducm.bootstrap(traces[cid], gauge.learned_capacity[cid],
                            bucket_mah=cfg.bucket_mah,
                            update_interval=cfg.update_interval)
        for cid in range(cfg.n_cells)
    }
    clock = max(m.last_update for m in models.values())
    pack.recharge(range(cfg.n_cells))
    outstation = OutstationSession(pack, gauge, models, cfg.tolerance,
                                   events=events, clock=clock)
    for _ in range(cfg.warmup_cycles):
        outstation.advance_cycle()
    master = MasterSession(events=events)
    return master, outstation


@dataclass
class SessionResult:
    events: EventLog
    accepted: int = 0
    rejected: int = 0
    aborted_rounds: int = 0
    rounds_run: int = 0
    master_state: str = ""
    outstation_state: str = ""
    tables_equal: bool = False

    def summary(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "aborted_rounds": self.aborted_rounds,
            "rounds_run": self.rounds_run,
            "master_state": self.master_state,
            "outstation_state": self.outstation_state,
            "tables_equal": self.tables_equal,
        }


def _ship(adversary: Adversary, frame: Frame, direction: str, round_: int) -> Frame | None:
    """One wire hop: encode, adversary, decode."""
    out = adversary.process(decode_frame(encode_frame(frame)), direction, round_)
    if out is None:
        return None
    return decode_frame(encode_frame(out))


def run_session(cfg: ScenarioConfig) -> SessionResult:
    """Drive a full scenario: enrollment, then the configured rounds."""
    events = EventLog()
    master, outstation = build_endpoints(cfg, events)
    adversary = Adversary(cfg.adversary, events=events)
    result = SessionResult(events=events)

    # enrollment; the first attempt may be dropped by a lossy transport
    attempts = 2 if cfg.enroll_drop_first else 1
    for attempt in range(attempts):
        payload = outstation.make_enrollment(cfg.crt_seed)
        if cfg.enroll_drop_first and attempt == 0:
            # transport loses the frame before it reaches the proxy
            outstation.enrollment_failed()
            events.log(0, "transport", "enroll_dropped", "idle", "first attempt lost")
            continue
        frame = _ship(adversary, Frame(MsgType.ENROLL_CRT, payload), "out->mst", 0)
        master.receive_enrollment(frame.payload)
        outstation.enrollment_delivered()

    rollback_stash = None
    if cfg.adversary.mode is AdversaryMode.ROLLBACK:
        rollback_stash = (outstation.crt, outstation.round)

    challenge_rng = random.Random(cfg.challenge_seed)
    for round_no in range(1, cfg.rounds + 1):
        if master.state is MasterState.ABORTED or outstation.state is OutstationState.ABORTED:
            break
        result.rounds_run += 1

        if (rollback_stash is not None
                and round_no == cfg.adversary.target_round + 1):
            outstation.crt, outstation.round = rollback_stash
            events.log(round_no, "adversary", "rollback",
                       "rollback", f"outstation table restored to round {outstation.round}")

        ch = master.build_challenge(challenge_rng.getrandbits(48))
        ch_frame = _ship(adversary, word_frame(MsgType.CHALLENGE, encode_challenge(ch)),
                         "mst->out", round_no)
        if ch_frame is None:
            master.receive_abort(Abort(AbortReason.DESYNC, "challenge lost"))
            result.aborted_rounds += 1
            continue

        outstation.advance_cycle()
        answer = outstation.handle_challenge(int.from_bytes(ch_frame.payload, "big"))

        if isinstance(answer, Abort):
            ab_frame = _ship(adversary, abort_frame(answer), "out->mst", round_no)
            if ab_frame is not None:
                master.receive_abort(decode_abort(ab_frame))
            else:
                master.receive_abort(Abort(AbortReason.DESYNC, "abort lost"))
            result.aborted_rounds += 1
            continue

        rp_frame = _ship(adversary, word_frame(MsgType.REPLY, answer), "out->mst", round_no)
        if rp_frame is None:
            master.receive_abort(Abort(AbortReason.DESYNC, "reply lost"))
            outstation.receive_verdict(None)
            result.aborted_rounds += 1
            continue

        verdict = master.verify_reply(int.from_bytes(rp_frame.payload, "big"), cfg.command)
        if verdict.accepted:
            result.accepted += 1
        else:
            result.rejected += 1
        vd_frame = _ship(adversary, verdict_frame(verdict), "mst->out", round_no)
        outstation.receive_verdict(decode_verdict(vd_frame) if vd_frame else None)

    result.master_state = master.state.value
    result.outstation_state = outstation.state.value
    result.tables_equal = (master.crt is not None and outstation.crt is not None
                           and master.crt == outstation.crt)
    return result


def export_crseq_dataset(cfg: ScenarioConfig, n: int, path) -> int:
    """Write n challenge/reply records from live authentication rounds.

    Authentication traffic is much faster than the 2 s gauge cadence, so
    `export_rounds_per_cycle` rounds share each measurement cycle (the
    pack state still advances throughout the export).  Rounds that abort
    (a cell out of its window or past tolerance) produce no record and
    are skipped; the export runs until n records exist.  Deterministic
    for a given config.
    """
    if n < 1:
        raise ConfigError(f"dataset size must be positive, got {n}")
    if cfg.export_rounds_per_cycle < 1:
        raise ConfigError("export_rounds_per_cycle must be >= 1")
    master, outstation = build_endpoints(cfg)
    enroll(master, outstation, cfg.crt_seed)
    challenge_rng = random.Random(cfg.challenge_seed)
    written = 0
    attempts = 0
    try:
        fh = open(path, "w", newline="")
    except OSError as err:
        raise ConfigError(f"cannot write dataset to {path}: {err}") from None
    with fh:
        while written < n:
            if attempts % cfg.export_rounds_per_cycle == 0:
                outstation.advance_cycle()
            attempts += 1
            ch = master.build_challenge(challenge_rng.getrandbits(48))
            answer = outstation.handle_challenge(encode_challenge(ch))
            if isinstance(answer, Abort):
                master.receive_abort(answer)
                continue
            verdict = master.verify_reply(answer)
            outstation.receive_verdict(verdict)
            if not verdict.accepted:
                raise RuntimeError("honest endpoints desynchronized during export")
            fh.write(crseq_csv_line(encode_challenge(ch), answer) + "\n")
            written += 1
    return written


def run_sweep(cfg: ScenarioConfig, path, progress=None):
    """Reliability curves for the configured grid, written as CSV."""
    result = reliability_sweep(
        seeds=cfg.seeds, intervals=cfg.intervals, taus=cfg.taus,
        tau_for_interval_curve=cfg.tolerance.tau_mah,
        n_cells=cfg.n_cells, n_measurements=cfg.n_measurements,
        pack_config=cfg.pack, gauge_config=cfg.gauge,
        bucket_mah=cfg.bucket_mah, progress=progress)
    result.write_csv(path)
    return result
