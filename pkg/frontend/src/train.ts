/** Training loop: momentum SGD on categorical cross-entropy, per-frame targets. */

import * as tf from "@tensorflow/tfjs";

import { N_CLASSES } from "./csv";
import { FRAME_H, FRAME_W } from "./frames";
import { WindowBatch } from "./windows";

export class DivergenceError extends Error {}

export interface TrainOptions {
  epochs: number;
  batchSize: number;
  learningRate: number;
  /** Stop early once training accuracy reaches this level. */
  targetAccuracy?: number;
  verbose?: boolean;
}

export interface TrainHistory {
  loss: number[];
  accuracy: number[];
  initialLoss: number;
}

export function batchToTensors(batch: WindowBatch): { x: tf.Tensor4D | tf.Tensor; y: tf.Tensor } {
  const nWindows = batch.starts.length;
  const x = tf.tensor(batch.x, [nWindows, batch.nFrames, FRAME_H, FRAME_W, 1]);
  const y = tf.oneHot(tf.tensor(batch.y, [nWindows, batch.nFrames], "int32"), N_CLASSES)
    .asType("float32");
  return { x, y };
}

export function concatBatches(batches: WindowBatch[]): WindowBatch {
  const nFrames = batches[0].nFrames;
  const totalWindows = batches.reduce((acc, b) => acc + b.starts.length, 0);
  const frameSize = nFrames * FRAME_H * FRAME_W;
  const x = new Float32Array(totalWindows * frameSize);
  const y = new Int32Array(totalWindows * nFrames);
  const starts: number[] = [];
  let offset = 0;
  for (const b of batches) {
    x.set(b.x, offset * frameSize);
    y.set(b.y, offset * nFrames);
    starts.push(...b.starts);
    offset += b.starts.length;
  }
  return { x, y, starts, nFrames };
}

export async function trainModel(
  model: tf.LayersModel,
  batch: WindowBatch,
  opts: TrainOptions
): Promise<TrainHistory> {
  const { x, y } = batchToTensors(batch);
  try {
    const initial = model.evaluate(x, y, { batchSize: opts.batchSize }) as tf.Scalar[];
    const initialLoss = (await initial[0].data())[0];
    initial.forEach((t) => t.dispose());

    const loss: number[] = [];
    const accuracy: number[] = [];
    for (let epoch = 0; epoch < opts.epochs; epoch++) {
      const h = await model.fit(x, y, {
        epochs: 1,
        batchSize: opts.batchSize,
        shuffle: false,
        verbose: 0,
      });
      const epochLoss = h.history.loss[0] as number;
      const epochAcc = (h.history.acc ?? h.history.accuracy)[0] as number;
      if (!Number.isFinite(epochLoss)) {
        throw new DivergenceError(
          `loss became ${epochLoss} at epoch ${epoch + 1} ` +
            `(lr=${opts.learningRate}, batch=${opts.batchSize})`
        );
      }
      loss.push(epochLoss);
      accuracy.push(epochAcc);
      if (opts.verbose) {
        console.log(
          `epoch ${epoch + 1}/${opts.epochs} loss=${epochLoss.toFixed(4)} acc=${epochAcc.toFixed(3)}`
        );
      }
      if (opts.targetAccuracy !== undefined && epochAcc >= opts.targetAccuracy) {
        break;
      }
    }
    return { loss, accuracy, initialLoss };
  } finally {
    x.dispose();
    y.dispose();
  }
}

export async function frameAccuracy(
  model: tf.LayersModel,
  batch: WindowBatch,
  batchSize = 16
): Promise<number> {
  const { x, y } = batchToTensors(batch);
  try {
    const probs = model.predict(x, { batchSize }) as tf.Tensor;
    const correct = tf.tidy(() =>
      probs.argMax(-1).equal(y.argMax(-1)).asType("float32").mean()
    );
    const value = (await correct.data())[0];
    probs.dispose();
    correct.dispose();
    return value;
  } finally {
    x.dispose();
    y.dispose();
  }
}
