// Validates the committed full-study artifact in results/ (regenerate with
//   bessauth export-dataset --n 110000 --out crseq.csv
//   node dist/cli.js --dataset crseq.csv --out results/attack_report.csv \
//       --curve-out results/attack_curve.csv --check --seed 0
// ~19 minutes wall time).  These assertions are the robustness criteria the
// live --check run enforces, applied to the shipped numbers.
import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { ReportRow, checkFindings } from "../src/report.js";

const REPORT = new URL("../results/attack_report.csv", import.meta.url).pathname;
const CURVE = new URL("../results/attack_curve.csv", import.meta.url).pathname;

function loadReport(): ReportRow[] {
  const lines = readFileSync(REPORT, "utf-8").trim().split("\n");
  expect(lines[0]).toBe("arch,dataset_size,batch,val_acc,pred_acc");
  return lines.slice(1).map((line) => {
    const [arch, size, batch, val, pred] = line.split(",");
    return {
      arch,
      datasetSize: Number(size),
      batch: Number(batch),
      valAcc: Number(val),
      predAcc: Number(pred),
      epochsRun: 0,
      seconds: 0,
    };
  });
}

describe("shipped full-study report", () => {
  const rows = loadReport();

  it("covers the three architectures at their batch sizes over 1k..100k", () => {
    const byArch = new Map<string, ReportRow[]>();
    rows.forEach((r) => byArch.set(r.arch, [...(byArch.get(r.arch) ?? []), r]));
    expect([...byArch.keys()].sort()).toEqual(
      ["64-320-128-64", "64-320-128-64-64", "64-64-64-64"].sort(),
    );
    expect(rows.filter((r) => r.arch === "64-320-128-64-64").every((r) => r.batch === 32)).toBe(true);
    expect(rows.filter((r) => r.arch === "64-64-64-64").every((r) => r.batch === 64)).toBe(true);
    for (const archRows of byArch.values()) {
      expect(archRows.map((r) => r.datasetSize).sort((a, b) => a - b)).toEqual(
        [1000, 5000, 10000, 50000, 100000],
      );
    }
  });

  it("stays below the 95% ceiling at every size and every architecture", () => {
    for (const r of rows) {
      expect(r.predAcc).toBeLessThan(0.95);
      expect(r.valAcc).toBeLessThan(0.95);
      expect(r.predAcc).toBeGreaterThan(0.45);
    }
  });

  it("shows diminishing gains: 10k->100k gain below 1k->10k gain per architecture", () => {
    const at = (arch: string, size: number) =>
      rows.find((r) => r.arch === arch && r.datasetSize === size)!.predAcc;
    for (const arch of ["64-320-128-64-64", "64-320-128-64", "64-64-64-64"]) {
      const early = at(arch, 10000) - at(arch, 1000);
      const late = at(arch, 100000) - at(arch, 10000);
      expect(late).toBeLessThan(early);
      expect(early).toBeGreaterThan(0);
    }
  });

  it("passes the robustness checker end to end", () => {
    expect(checkFindings(rows)).toEqual([]);
  });

  it("matches the curve artifact", () => {
    const curve = readFileSync(CURVE, "utf-8").trim().split("\n");
    expect(curve[0]).toBe("arch,dataset_size,pred_acc");
    expect(curve.length).toBe(rows.length + 1);
    for (const line of curve.slice(1)) {
      const [arch, size, pred] = line.split(",");
      const row = rows.find((r) => r.arch === arch && r.datasetSize === Number(size))!;
      expect(Number(pred)).toBeCloseTo(row.predAcc, 6);
    }
  });
});
