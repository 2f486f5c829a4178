/**
 * Window sampling over a 1 Hz frame stream.
 *
 * Training consumes windows of nFrames consecutive frames taken every
 * stride = round(nFrames * (1 - overlap)) frames; every frame inside a
 * window keeps its own label, so per-frame prediction targets fall out
 * directly.
 */

import { FRAME_H, FRAME_W, FrameStream } from "./frames";

export class StreamTooShortError extends Error {}

export interface WindowConfig {
  nFrames: number; // N
  overlap: number; // O, fraction of frames shared by consecutive windows
}

export const DEFAULT_WINDOW: WindowConfig = { nFrames: 32, overlap: 0.5 };

export function strideOf(cfg: WindowConfig): number {
  const stride = Math.round(cfg.nFrames * (1 - cfg.overlap));
  return Math.max(1, stride);
}

export function validateWindowConfig(cfg: WindowConfig): void {
  if (!Number.isInteger(cfg.nFrames) || cfg.nFrames < 2) {
    throw new Error(`nFrames must be an integer >= 2, got ${cfg.nFrames}`);
  }
  if (cfg.overlap < 0 || cfg.overlap >= 1) {
    throw new Error(`overlap must be in [0, 1), got ${cfg.overlap}`);
  }
}

/** Start indices of the full windows a stream yields. */
export function windowStarts(nTotal: number, cfg: WindowConfig): number[] {
  validateWindowConfig(cfg);
  if (nTotal < cfg.nFrames) {
    throw new StreamTooShortError(
      `stream of ${nTotal} frames is shorter than one ${cfg.nFrames}-frame window`
    );
  }
  const stride = strideOf(cfg);
  const starts: number[] = [];
  for (let s = 0; s + cfg.nFrames <= nTotal; s += stride) {
    starts.push(s);
  }
  return starts;
}

export interface WindowBatch {
  /** [nWindows * nFrames * FRAME_H * FRAME_W] frame pixels. */
  x: Float32Array;
  /** [nWindows * nFrames] per-frame labels. */
  y: Int32Array;
  starts: number[];
  nFrames: number;
}

export function sampleWindows(
  stream: FrameStream,
  labels: ArrayLike<number>,
  cfg: WindowConfig
): WindowBatch {
  if (stream.nFrames !== labels.length) {
    throw new Error(
      `frames (${stream.nFrames}) and labels (${labels.length}) must align 1:1`
    );
  }
  const starts = windowStarts(stream.nFrames, cfg);
  const size = FRAME_H * FRAME_W;
  const x = new Float32Array(starts.length * cfg.nFrames * size);
  const y = new Int32Array(starts.length * cfg.nFrames);
  starts.forEach((start, w) => {
    x.set(
      stream.pixels.subarray(start * size, (start + cfg.nFrames) * size),
      w * cfg.nFrames * size
    );
    for (let f = 0; f < cfg.nFrames; f++) {
      y[w * cfg.nFrames + f] = Number(labels[start + f]);
    }
  });
  return { x, y, starts, nFrames: cfg.nFrames };
}
