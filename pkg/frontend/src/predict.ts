/**
 * Whole-stream inference: slide windows over the stream, average the
 * per-frame class scores across overlapping windows, then argmax. Output
 * is one label per frame, ready for the engine's labels.csv format.
 */

import * as tf from "@tensorflow/tfjs";

import { N_CLASSES } from "./csv";
import { FRAME_H, FRAME_W, FrameStream } from "./frames";
import { WindowConfig, windowStarts } from "./windows";

export async function predictStream(
  model: tf.LayersModel,
  stream: FrameStream,
  cfg: WindowConfig,
  batchSize = 16
): Promise<Int32Array> {
  const n = stream.nFrames;
  const starts = windowStarts(n, cfg);
  // Training strides can leave a tail shorter than one stride; anchor one
  // extra window at the stream end so every frame gets scored.
  const last = starts[starts.length - 1];
  if (last + cfg.nFrames < n) {
    starts.push(n - cfg.nFrames);
  }

  const size = FRAME_H * FRAME_W;
  const scores = new Float32Array(n * N_CLASSES);
  const hits = new Int32Array(n);

  for (let b = 0; b < starts.length; b += batchSize) {
    const chunk = starts.slice(b, b + batchSize);
    const xbuf = new Float32Array(chunk.length * cfg.nFrames * size);
    chunk.forEach((start, i) => {
      xbuf.set(
        stream.pixels.subarray(start * size, (start + cfg.nFrames) * size),
        i * cfg.nFrames * size
      );
    });
    const x = tf.tensor(xbuf, [chunk.length, cfg.nFrames, FRAME_H, FRAME_W, 1]);
    const probs = model.predict(x) as tf.Tensor;
    const data = await probs.data();
    x.dispose();
    probs.dispose();
    chunk.forEach((start, i) => {
      for (let f = 0; f < cfg.nFrames; f++) {
        const frame = start + f;
        const src = (i * cfg.nFrames + f) * N_CLASSES;
        for (let c = 0; c < N_CLASSES; c++) {
          scores[frame * N_CLASSES + c] += data[src + c];
        }
        hits[frame] += 1;
      }
    });
  }

  const labels = new Int32Array(n);
  for (let frame = 0; frame < n; frame++) {
    let best = 0;
    let bestScore = -Infinity;
    for (let c = 0; c < N_CLASSES; c++) {
      const s = scores[frame * N_CLASSES + c] / hits[frame];
      if (s > bestScore) {
        bestScore = s;
        best = c;
      }
    }
    labels[frame] = best;
  }
  return labels;
}
