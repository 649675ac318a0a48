/**
 * The study runner: trains every (architecture, dataset size) pair and
 * gathers the report table, the accuracy-vs-size curve, and robustness
 * checks on the results.
 *
 * The last `predictionHoldout` records of the dataset file are reserved
 * as the prediction hold-out and never trained on; every requested
 * training size must fit in the records before them.
 */

import { writeFileSync } from "node:fs";
import { Dataset, shuffle, slice } from "./dataset.js";
import { parseArchitecture, trainAndEvaluate } from "./mlp.js";
import { deriveSeed } from "./rng.js";

export interface StudyConfig {
  architectures: string[];
  batchSizes: number[];
  datasetSizes: number[];
  validationSplit: number;
  epochs: number;
  learningRate: number;
  patience: number;
  seed: number;
  predictionHoldout: number;
}

export const DEFAULT_CONFIG: StudyConfig = {
  architectures: ["64-320-128-64-64", "64-320-128-64", "64-64-64-64"],
  batchSizes: [32, 32, 64],
  datasetSizes: [1000, 5000, 10000, 50000, 100000],
  validationSplit: 0.2,
  epochs: 15,
  learningRate: 1e-3,
  patience: 3,
  seed: 0,
  predictionHoldout: 10000,
};

export interface ReportRow {
  arch: string;
  datasetSize: number;
  batch: number;
  valAcc: number;
  predAcc: number;
  epochsRun: number;
  seconds: number;
}

export function validateConfig(cfg: StudyConfig): void {
  if (!(cfg.validationSplit > 0 && cfg.validationSplit < 1)) {
    throw new Error(`validation split must sit in (0,1), got ${cfg.validationSplit}`);
  }
  if (cfg.architectures.length !== cfg.batchSizes.length) {
    throw new Error(
      `${cfg.architectures.length} architectures but ${cfg.batchSizes.length} batch sizes`,
    );
  }
  if (cfg.datasetSizes.some((s) => s < 50)) {
    throw new Error("dataset sizes below 50 records are not meaningful");
  }
  cfg.architectures.forEach(parseArchitecture);
}

export async function runStudy(
  ds: Dataset,
  cfg: StudyConfig,
  progress?: (msg: string) => void,
): Promise<ReportRow[]> {
  validateConfig(cfg);
  const holdout = Math.min(cfg.predictionHoldout, Math.max(200, Math.floor(ds.n * 0.1)));
  const usable = ds.n - holdout;
  const maxSize = Math.max(...cfg.datasetSizes);
  if (maxSize > usable) {
    throw new Error(
      `dataset has ${ds.n} records; ${maxSize} training + ${holdout} hold-out requested — ` +
        `export at least ${maxSize + holdout}`,
    );
  }
  // the hold-out must come from the same collection distribution as the
  // training records (the paper tests "using the same procedure"), so the
  // pool is shuffled once, deterministically, before the split
  const pool = shuffle(ds, deriveSeed(cfg.seed, "holdout-split"));
  const prediction = slice(pool, pool.n - holdout, pool.n);
  const rows: ReportRow[] = [];
  for (let a = 0; a < cfg.architectures.length; a++) {
    const arch = parseArchitecture(cfg.architectures[a]);
    for (const size of [...cfg.datasetSizes].sort((x, y) => x - y)) {
      const train = slice(pool, 0, size);
      const outcome = await trainAndEvaluate(arch, train, prediction, {
        batchSize: cfg.batchSizes[a],
        epochs: cfg.epochs,
        learningRate: cfg.learningRate,
        validationSplit: cfg.validationSplit,
        seed: cfg.seed,
        patience: cfg.patience,
      });
      rows.push({
        arch: arch.name,
        datasetSize: size,
        batch: cfg.batchSizes[a],
        valAcc: outcome.validationAccuracy,
        predAcc: outcome.predictionAccuracy,
        epochsRun: outcome.epochsRun,
        seconds: outcome.seconds,
      });
      progress?.(
        `${arch.name} @ ${size}: val ${(outcome.validationAccuracy * 100).toFixed(2)}% ` +
          `pred ${(outcome.predictionAccuracy * 100).toFixed(2)}% ` +
          `(${outcome.epochsRun} epochs, ${outcome.seconds.toFixed(1)}s)`,
      );
    }
  }
  return rows;
}

export function reportCsv(rows: ReportRow[]): string {
  const lines = ["arch,dataset_size,batch,val_acc,pred_acc"];
  for (const r of rows) {
    lines.push(
      `${r.arch},${r.datasetSize},${r.batch},${r.valAcc.toFixed(4)},${r.predAcc.toFixed(4)}`,
    );
  }
  return lines.join("\n") + "\n";
}

export function curveCsv(rows: ReportRow[]): string {
  const lines = ["arch,dataset_size,pred_acc"];
  for (const r of [...rows].sort((a, b) => a.arch.localeCompare(b.arch) || a.datasetSize - b.datasetSize)) {
    lines.push(`${r.arch},${r.datasetSize},${r.predAcc.toFixed(4)}`);
  }
  return lines.join("\n") + "\n";
}

export function writeReport(rows: ReportRow[], path: string): void {
  writeFileSync(path, reportCsv(rows));
}

export function writeCurve(rows: ReportRow[], path: string): void {
  writeFileSync(path, curveCsv(rows));
}

/**
 * Robustness checks over a finished study:
 *  - prediction accuracy stays below the ceiling (default 95%) everywhere;
 *  - diminishing returns: per architecture, the gain from the mid-size to
 *    the largest size is smaller than the gain from the smallest to the
 *    mid-size (mid = the size closest to 10k).
 */
export function checkFindings(rows: ReportRow[], ceiling = 0.95): string[] {
  const problems: string[] = [];
  for (const r of rows) {
    if (r.predAcc >= ceiling) {
      problems.push(
        `${r.arch} @ ${r.datasetSize}: prediction accuracy ${(r.predAcc * 100).toFixed(2)}% ` +
          `reaches the ${(ceiling * 100).toFixed(0)}% ceiling`,
      );
    }
  }
  const byArch = new Map<string, ReportRow[]>();
  for (const r of rows) {
    byArch.set(r.arch, [...(byArch.get(r.arch) ?? []), r]);
  }
  for (const [arch, archRows] of byArch) {
    const sorted = [...archRows].sort((a, b) => a.datasetSize - b.datasetSize);
    if (sorted.length < 3) continue;
    const first = sorted[0];
    const last = sorted[sorted.length - 1];
    const mid = sorted.reduce((best, r) =>
      Math.abs(r.datasetSize - 10000) < Math.abs(best.datasetSize - 10000) ? r : best,
    );
    if (mid === first || mid === last) continue;
    const earlyGain = mid.predAcc - first.predAcc;
    const lateGain = last.predAcc - mid.predAcc;
    if (!(lateGain < earlyGain)) {
      problems.push(
        `${arch}: late gain ${(lateGain * 100).toFixed(2)}pp ` +
          `(${mid.datasetSize}->${last.datasetSize}) not below early gain ` +
          `${(earlyGain * 100).toFixed(2)}pp (${first.datasetSize}->${mid.datasetSize})`,
      );
    }
  }
  return problems;
}
