/**
 * Modeling-attack evaluator CLI.
 *
 *   node dist/cli.js --dataset crseq.csv --out attack_report.csv \
 *       [--curve-out curve.csv] [--sizes 1000,10000,100000] [--seed 0] \
 *       [--epochs 12] [--archs 64-320-128-64-64,...] [--check]
 *
 * Reads the exported challenge-reply CSV, trains every configured MLP at
 * every dataset size, writes the report table (and optionally the
 * accuracy-vs-size curve), and with --check exits non-zero if any
 * robustness finding fails.
 */

import { parseArgs } from "node:util";
import { initBackend } from "./backend.js";
import { loadDataset } from "./dataset.js";
import {
  DEFAULT_CONFIG,
  StudyConfig,
  checkFindings,
  reportCsv,
  runStudy,
  writeCurve,
  writeReport,
} from "./report.js";

function intList(raw: string): number[] {
  return raw.split(",").map((s) => {
    const v = Number(s.trim());
    if (!Number.isInteger(v) || v < 1) throw new Error(`bad integer list entry: ${s}`);
    return v;
  });
}

export async function main(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      dataset: { type: "string", default: "crseq.csv" },
      out: { type: "string", default: "attack_report.csv" },
      "curve-out": { type: "string" },
      sizes: { type: "string" },
      archs: { type: "string" },
      batches: { type: "string" },
      epochs: { type: "string" },
      patience: { type: "string" },
      lr: { type: "string" },
      "val-split": { type: "string" },
      seed: { type: "string", default: "0" },
      holdout: { type: "string" },
      backend: { type: "string", default: "wasm" },
      check: { type: "boolean", default: false },
      quiet: { type: "boolean", default: false },
    },
  });

  const cfg: StudyConfig = {
    ...DEFAULT_CONFIG,
    seed: Number(values.seed),
    ...(values.sizes ? { datasetSizes: intList(values.sizes) } : {}),
    ...(values.archs ? { architectures: values.archs.split(",").map((s) => s.trim()) } : {}),
    ...(values.batches ? { batchSizes: intList(values.batches) } : {}),
    ...(values.epochs ? { epochs: Number(values.epochs) } : {}),
    ...(values.patience ? { patience: Number(values.patience) } : {}),
    ...(values.lr ? { learningRate: Number(values.lr) } : {}),
    ...(values["val-split"] ? { validationSplit: Number(values["val-split"]) } : {}),
    ...(values.holdout ? { predictionHoldout: Number(values.holdout) } : {}),
  };
  if (values.archs && !values.batches) {
    cfg.batchSizes = cfg.architectures.map(() => 32);
  }

  const backend = await initBackend(values.backend === "cpu" ? "cpu" : "wasm");
  const log = values.quiet ? () => undefined : (msg: string) => console.error(msg);
  log(`backend: ${backend}`);

  const ds = loadDataset(values.dataset!);
  log(`dataset: ${values.dataset} (${ds.n} records)`);

  const rows = await runStudy(ds, cfg, log);
  writeReport(rows, values.out!);
  log(`report written to ${values.out}`);
  if (values["curve-out"]) {
    writeCurve(rows, values["curve-out"]);
    log(`curve written to ${values["curve-out"]}`);
  }
  if (!values.quiet) {
    process.stdout.write(reportCsv(rows));
  }

  if (values.check) {
    const problems = checkFindings(rows);
    if (problems.length) {
      for (const p of problems) console.error(`CHECK FAILED: ${p}`);
      return 1;
    }
    log("checks passed: accuracy below ceiling everywhere, gains diminish with size");
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  main(process.argv.slice(2))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(String(err?.message ?? err));
      process.exit(2);
    });
}
