/** tfjs backend selection: wasm when available, plain cpu otherwise. */

import * as tf from "@tensorflow/tfjs";
import { createRequire } from "node:module";
import { dirname, join } from "node:path";

export async function initBackend(prefer: "wasm" | "cpu" = "wasm"): Promise<string> {
  if (prefer === "wasm") {
    try {
      const require = createRequire(import.meta.url);
      const wasm = await import("@tensorflow/tfjs-backend-wasm");
      const pkg = require.resolve("@tensorflow/tfjs-backend-wasm");
      wasm.setWasmPaths(join(dirname(pkg), "/"));
      // single-threaded keeps reductions bit-deterministic across runs
      wasm.setThreadsCount(1);
      if (await tf.setBackend("wasm")) {
        await tf.ready();
        return tf.getBackend();
      }
    } catch {
      // fall through to the pure-js backend
    }
  }
  await tf.setBackend("cpu");
  await tf.ready();
  return tf.getBackend();
}
