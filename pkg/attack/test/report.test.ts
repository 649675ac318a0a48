import { beforeAll, describe, expect, it } from "vitest";
import { initBackend } from "../src/backend.js";
import { loadDataset } from "../src/dataset.js";
import {
  DEFAULT_CONFIG,
  ReportRow,
  checkFindings,
  curveCsv,
  reportCsv,
  runStudy,
  validateConfig,
} from "../src/report.js";

const FIXTURE = new URL("./fixtures/crseq4k.csv", import.meta.url).pathname;

beforeAll(async () => {
  await initBackend();
});

function row(arch: string, size: number, predAcc: number): ReportRow {
  return { arch, datasetSize: size, batch: 32, valAcc: predAcc, predAcc, epochsRun: 1, seconds: 0 };
}

describe("config validation", () => {
  it("accepts the defaults", () => {
    validateConfig(DEFAULT_CONFIG);
  });

  it("rejects mismatched batch lists and bad splits", () => {
    expect(() => validateConfig({ ...DEFAULT_CONFIG, batchSizes: [32] })).toThrowError(/batch/);
    expect(() => validateConfig({ ...DEFAULT_CONFIG, validationSplit: 0 })).toThrowError(/split/);
    expect(() => validateConfig({ ...DEFAULT_CONFIG, datasetSizes: [10] })).toThrowError(/50/);
  });
});

describe("report formats", () => {
  const rows = [row("64-64-64", 1000, 0.61), row("64-64-64", 10000, 0.70)];

  it("report carries the table columns", () => {
    const csv = reportCsv(rows);
    expect(csv.split("\n")[0]).toBe("arch,dataset_size,batch,val_acc,pred_acc");
    expect(csv).toContain("64-64-64,1000,32,0.6100,0.6100");
  });

  it("curve is (architecture, size, accuracy) sorted by size", () => {
    const csv = curveCsv(rows);
    expect(csv.split("\n")[0]).toBe("arch,dataset_size,pred_acc");
    expect(csv.indexOf(",1000,")).toBeLessThan(csv.indexOf(",10000,"));
  });
});

describe("checkFindings", () => {
  it("flags accuracy at the ceiling", () => {
    const bad = [row("a", 1000, 0.97)];
    expect(checkFindings(bad)[0]).toMatch(/ceiling/);
    expect(checkFindings([row("a", 1000, 0.80)])).toEqual([]);
  });

  it("flags non-diminishing gains", () => {
    const increasing = [row("a", 1000, 0.60), row("a", 10000, 0.62), row("a", 100000, 0.70)];
    expect(checkFindings(increasing)[0]).toMatch(/gain/);
    const plateau = [row("a", 1000, 0.60), row("a", 10000, 0.68), row("a", 100000, 0.70)];
    expect(checkFindings(plateau)).toEqual([]);
  });
});

describe("runStudy on the fixture", () => {
  it("produces one row per (architecture, size) and is deterministic", async () => {
    const ds = loadDataset(FIXTURE);
    const cfg = {
      ...DEFAULT_CONFIG,
      architectures: ["64-64-64-64"],
      batchSizes: [64],
      datasetSizes: [400, 1200],
      epochs: 3,
      patience: 0,
      predictionHoldout: 800,
      seed: 9,
    };
    const a = await runStudy(ds, cfg);
    expect(a).toHaveLength(2);
    expect(a.map((r) => r.datasetSize)).toEqual([400, 1200]);
    for (const r of a) {
      expect(r.valAcc).toBeGreaterThan(0);
      expect(r.valAcc).toBeLessThanOrEqual(1);
      expect(r.predAcc).toBeGreaterThan(0.4);
      expect(r.predAcc).toBeLessThan(0.95);
    }
    const b = await runStudy(ds, cfg);
    expect(reportCsv(b)).toBe(reportCsv(a));
  }, 240_000);

  it("refuses sizes that collide with the prediction hold-out", async () => {
    const ds = loadDataset(FIXTURE);
    const cfg = { ...DEFAULT_CONFIG, datasetSizes: [3900], predictionHoldout: 500 };
    await expect(runStudy(ds, cfg)).rejects.toThrowError(/export at least/);
  });
});
