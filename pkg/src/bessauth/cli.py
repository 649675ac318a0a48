"""Command-line entry point.

Verbs: enroll, authenticate, sweep, export-dataset, attack-eval, demo.
Every verb takes --config (INI scenario file) and --seed (overrides the
pack seed).
"""

from __future__ import annotations

import argparse
import json
import shutil
import subprocess
import sys
from pathlib import Path

from .adversary import AdversaryMode, AdversaryPolicy
from .endpoints import enroll as enroll_endpoints
from .errors import ConfigError
from .harness import (
    ScenarioConfig,
    build_endpoints,
    export_crseq_dataset,
    load_config,
    run_session,
    run_sweep,
)


def _scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _cmd_enroll(args) -> int:
    cfg = _scenario(args)
    master, outstation = build_endpoints(cfg)
    enroll_endpoints(master, outstation, cfg.crt_seed)
    print(f"enrolled: {cfg.n_cells} cells, table version {master.crt.version}")
    print(master.events.to_jsonl())
    return 0


def _cmd_authenticate(args) -> int:
    cfg = _scenario(args)
    if args.rounds is not None:
        from dataclasses import replace
        cfg = replace(cfg, rounds=args.rounds)
    result = run_session(cfg)
    if args.events:
        Path(args.events).write_text(result.events.to_jsonl() + "\n")
        print(f"event log written to {args.events}")
    print(json.dumps(result.summary(), indent=2))
    # aborted rounds are retryable; only a rejection or desync is a failure
    ok = (result.rejected == 0
          and result.outstation_state == "enrolled"
          and result.tables_equal)
    return 0 if ok else 1


def _cmd_sweep(args) -> int:
    cfg = _scenario(args)
    result = run_sweep(cfg, args.out, progress=lambda msg: print(msg, file=sys.stderr))
    print(f"curves written to {args.out}")
    for interval, rel in result.interval_curve:
        print(f"  interval {interval:>6}: reliability {rel:.2f}%")
    return 0


def _cmd_export_dataset(args) -> int:
    cfg = _scenario(args)
    written = export_crseq_dataset(cfg, args.n, args.out)
    print(f"wrote {written} challenge-reply records to {args.out}")
    # duplicate scan: repeated challenges are expected, identical full
    # records would mean the pack state failed to feed the reply
    from collections import Counter
    challenges = Counter()
    pairs = Counter()
    with open(args.out) as fh:
        for line in fh:
            challenges[line[:16]] += 1
            pairs[line.strip()] += 1
    dup_ch = sum(c - 1 for c in challenges.values() if c > 1)
    dup_pairs = sum(c - 1 for c in pairs.values() if c > 1)
    print(f"duplicate challenges: {dup_ch}; duplicate (challenge,reply) records: {dup_pairs}")
    return 0


def _cmd_attack_eval(args) -> int:
    """Delegate to the modeling-attack evaluator (separate package)."""
    runner = shutil.which("node")
    entry = Path(__file__).resolve().parents[2] / "attack" / "dist" / "cli.js"
    if args.attack_cli:
        entry = Path(args.attack_cli)
    if runner is None or not entry.exists():
        print("attack evaluator not available: build the attack/ package "
              "(npm install && npm run build) or pass --attack-cli", file=sys.stderr)
        return 2
    cmd = [runner, str(entry), "--dataset", args.dataset, "--out", args.out,
           "--seed", str(args.seed if args.seed is not None else 0)]
    if args.sizes:
        cmd += ["--sizes", args.sizes]
    if args.epochs is not None:
        cmd += ["--epochs", str(args.epochs)]
    return subprocess.call(cmd)


def _cmd_demo(args) -> int:
    cfg = _scenario(args)
    from dataclasses import replace
    cfg = replace(cfg, rounds=6, n_cells=min(cfg.n_cells, 20),
                  adversary=AdversaryPolicy(mode=AdversaryMode.TAMPER,
                                            target_round=4, tamper_bit=59))
    result = run_session(cfg)
    for record in result.events.records:
        print(json.dumps(record, separators=(",", ":")))
    print()
    print("A tampered reply at round 4 must never authenticate:")
    print(json.dumps(result.summary(), indent=2))
    return 0 if result.rejected >= 1 or result.outstation_state == "aborted" else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bessauth",
        description="Battery-backed challenge-reply authentication testbed")
    parser.add_argument("--version", action="version", version="%(prog)s 0.1.0")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="scenario INI file")
        p.add_argument("--seed", type=int, help="pack seed override")

    p = sub.add_parser("enroll", help="run the enrollment exchange")
    common(p)
    p.set_defaults(func=_cmd_enroll)

    p = sub.add_parser("authenticate", help="run authentication rounds over the wire")
    common(p)
    p.add_argument("--rounds", type=int, help="number of rounds")
    p.add_argument("--events", help="write the JSON-lines event log here")
    p.set_defaults(func=_cmd_authenticate)

    p = sub.add_parser("sweep", help="reliability curves vs interval and tolerance")
    common(p)
    p.add_argument("--out", default="reliability_curves.csv")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("export-dataset", help="export challenge-reply records as CSV")
    common(p)
    p.add_argument("--n", type=int, default=100_000, help="records to export")
    p.add_argument("--out", default="crseq.csv")
    p.set_defaults(func=_cmd_export_dataset)

    p = sub.add_parser("attack-eval", help="run the modeling-attack evaluator")
    common(p)
    p.add_argument("--dataset", default="crseq.csv")
    p.add_argument("--out", default="attack_report.csv")
    p.add_argument("--sizes", help="comma list of dataset sizes")
    p.add_argument("--epochs", type=int)
    p.add_argument("--attack-cli", help="path to the evaluator's cli.js")
    p.set_defaults(func=_cmd_attack_eval)

    p = sub.add_parser("demo", help="small end-to-end run with a tampering adversary")
    common(p)
    p.set_defaults(func=_cmd_demo)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
