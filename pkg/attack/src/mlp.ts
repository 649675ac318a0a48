/**
 * MLP construction, training, and per-bit evaluation.
 *
 * Architectures are written `64-320-128-64-64`: 64 challenge bits in,
 * hidden widths between, 64 reply bits out.  Hidden layers are ReLU, the
 * output is a 64-way sigmoid trained with per-bit binary cross-entropy
 * under the adaptive-moment optimizer.  Accuracy is the mean per-bit hit
 * rate at a 0.5 threshold.
 */

import * as tf from "@tensorflow/tfjs";
import { BITS, Dataset, shuffle, slice } from "./dataset.js";
import { deriveSeed } from "./rng.js";

export interface Architecture {
  name: string;
  hidden: number[];
}

export function parseArchitecture(spec: string): Architecture {
  const widths = spec.split("-").map((w) => Number(w));
  if (widths.length < 2 || widths.some((w) => !Number.isInteger(w) || w < 1)) {
    throw new Error(`bad architecture ${JSON.stringify(spec)}: expected e.g. 64-320-128-64-64`);
  }
  if (widths[0] !== BITS || widths[widths.length - 1] !== BITS) {
    throw new Error(`architecture ${spec} must start and end with ${BITS} (challenge/reply width)`);
  }
  return { name: spec, hidden: widths.slice(1, -1) };
}

export function buildModel(arch: Architecture, seed: number, learningRate: number): tf.Sequential {
  const model = tf.sequential();
  arch.hidden.forEach((units, i) => {
    model.add(
      tf.layers.dense({
        units,
        activation: "relu",
        inputShape: i === 0 ? [BITS] : undefined,
        kernelInitializer: tf.initializers.glorotUniform({ seed: deriveSeed(seed, `k${i}`) }),
        biasInitializer: "zeros",
      }),
    );
  });
  model.add(
    tf.layers.dense({
      units: BITS,
      activation: "sigmoid",
      inputShape: arch.hidden.length === 0 ? [BITS] : undefined,
      kernelInitializer: tf.initializers.glorotUniform({ seed: deriveSeed(seed, "kout") }),
      biasInitializer: "zeros",
    }),
  );
  model.compile({
    optimizer: tf.train.adam(learningRate),
    loss: "binaryCrossentropy",
    metrics: ["binaryAccuracy"],
  });
  return model;
}

/** Mean per-bit accuracy of thresholded predictions against 0/1 targets. */
export function perBitAccuracy(model: tf.LayersModel, ds: Dataset): number {
  return tf.tidy(() => {
    const x = tf.tensor2d(ds.x, [ds.n, BITS]);
    const y = tf.tensor2d(ds.y, [ds.n, BITS]);
    const hits = model.predict(x) as tf.Tensor;
    const acc = tf.mean(tf.equal(tf.greaterEqual(hits, 0.5), tf.cast(y, "bool")).cast("float32"));
    return acc.dataSync()[0];
  });
}

export interface TrainOptions {
  batchSize: number;
  epochs: number;
  learningRate: number;
  validationSplit: number;
  seed: number;
  /** stop when validation loss has not improved for this many epochs */
  patience?: number;
}

export interface TrainOutcome {
  validationAccuracy: number;
  predictionAccuracy: number;
  epochsRun: number;
  seconds: number;
}

/**
 * Train one network on `train` and score it on the validation tail of the
 * (deterministically shuffled) training records plus the disjoint
 * `prediction` hold-out.
 */
export async function trainAndEvaluate(
  arch: Architecture,
  train: Dataset,
  prediction: Dataset,
  opts: TrainOptions,
): Promise<TrainOutcome> {
  if (!(opts.validationSplit > 0 && opts.validationSplit < 1)) {
    throw new Error(`validation split must sit in (0,1), got ${opts.validationSplit}`);
  }
  const ordered = shuffle(train, deriveSeed(opts.seed, `${arch.name}:${train.n}`));
  const nVal = Math.max(1, Math.round(train.n * opts.validationSplit));
  const fitSet = slice(ordered, 0, ordered.n - nVal);
  const valSet = slice(ordered, ordered.n - nVal, ordered.n);

  const model = buildModel(arch, deriveSeed(opts.seed, arch.name), opts.learningRate);
  const x = tf.tensor2d(fitSet.x, [fitSet.n, BITS]);
  const y = tf.tensor2d(fitSet.y, [fitSet.n, BITS]);
  const vx = tf.tensor2d(valSet.x, [valSet.n, BITS]);
  const vy = tf.tensor2d(valSet.y, [valSet.n, BITS]);

  const t0 = Date.now();
  let epochsRun = 0;
  const callbacks = opts.patience
    ? [tf.callbacks.earlyStopping({ monitor: "val_loss", patience: opts.patience })]
    : [];
  const history = await model.fit(x, y, {
    epochs: opts.epochs,
    batchSize: opts.batchSize,
    shuffle: false, // the deterministic pre-shuffle above owns the ordering
    verbose: 0,
    validationData: [vx, vy],
    callbacks,
  });
  epochsRun = history.history.loss.length;
  const seconds = (Date.now() - t0) / 1000;

  const validationAccuracy = perBitAccuracy(model, valSet);
  const predictionAccuracy = perBitAccuracy(model, prediction);
  tf.dispose([x, y, vx, vy]);
  model.dispose();
  return { validationAccuracy, predictionAccuracy, epochsRun, seconds };
}
