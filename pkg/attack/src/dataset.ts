/**
 * Challenge-reply dataset handling.
 *
 * The exchange format is header-less CSV, one record per line:
 * `challenge_hex16,reply_hex16` (16 lowercase hex digits each).  Records
 * become 64-element 0/1 vectors, challenge bits in, reply bits out, most
 * significant bit first.
 */

import { readFileSync, existsSync } from "node:fs";
import { makeRng, permutation } from "./rng.js";

export const BITS = 64;

export interface Dataset {
  /** flattened [n, 64] challenge bits */
  x: Float32Array;
  /** flattened [n, 64] reply bits */
  y: Float32Array;
  n: number;
}

const LINE_RE = /^[0-9a-f]{16},[0-9a-f]{16}$/;

function hexToBits(hex: string, out: Float32Array, offset: number): void {
  for (let i = 0; i < 16; i++) {
    const nibble = parseInt(hex[i], 16);
    const base = offset + i * 4;
    out[base] = (nibble >> 3) & 1;
    out[base + 1] = (nibble >> 2) & 1;
    out[base + 2] = (nibble >> 1) & 1;
    out[base + 3] = nibble & 1;
  }
}

export function parseCsv(text: string): Dataset {
  const lines = text.split("\n");
  while (lines.length && lines[lines.length - 1] === "") lines.pop();
  if (lines.length === 0) throw new Error("dataset is empty");
  const n = lines.length;
  const x = new Float32Array(n * BITS);
  const y = new Float32Array(n * BITS);
  for (let i = 0; i < n; i++) {
    const line = lines[i];
    if (!LINE_RE.test(line)) {
      throw new Error(
        `line ${i + 1}: expected "challenge_hex16,reply_hex16", got ${JSON.stringify(line)}`,
      );
    }
    hexToBits(line.slice(0, 16), x, i * BITS);
    hexToBits(line.slice(17, 33), y, i * BITS);
  }
  return { x, y, n };
}

export function loadDataset(path: string): Dataset {
  if (!existsSync(path)) {
    throw new Error(
      `dataset not found: ${path} — generate it first with ` +
        "`bessauth export-dataset --n <records> --out " + path + "`",
    );
  }
  return parseCsv(readFileSync(path, "utf-8"));
}

export function slice(ds: Dataset, start: number, end: number): Dataset {
  if (start < 0 || end > ds.n || start >= end) {
    throw new Error(`bad slice [${start}, ${end}) of ${ds.n} records`);
  }
  return {
    x: ds.x.slice(start * BITS, end * BITS),
    y: ds.y.slice(start * BITS, end * BITS),
    n: end - start,
  };
}

/** Deterministic row permutation. */
export function shuffle(ds: Dataset, seed: number): Dataset {
  const order = permutation(ds.n, seed);
  const x = new Float32Array(ds.n * BITS);
  const y = new Float32Array(ds.n * BITS);
  for (let i = 0; i < ds.n; i++) {
    const src = order[i];
    x.set(ds.x.subarray(src * BITS, (src + 1) * BITS), i * BITS);
    y.set(ds.y.subarray(src * BITS, (src + 1) * BITS), i * BITS);
  }
  return { x, y, n: ds.n };
}

/** Control: random challenges, all replies zero (a learnable ceiling). */
export function constantReplyDataset(n: number, seed: number): Dataset {
  const rng = makeRng(seed);
  const x = new Float32Array(n * BITS);
  for (let i = 0; i < n * BITS; i++) x[i] = rng() < 0.5 ? 1 : 0;
  return { x, y: new Float32Array(n * BITS), n };
}

/** Control: replies replaced by fresh coin flips (nothing to learn). */
export function shuffledLabelDataset(ds: Dataset, seed: number): Dataset {
  const rng = makeRng(seed);
  const y = new Float32Array(ds.n * BITS);
  for (let i = 0; i < ds.n * BITS; i++) y[i] = rng() < 0.5 ? 1 : 0;
  return { x: ds.x.slice(), y, n: ds.n };
}
