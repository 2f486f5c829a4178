/**
 * Synthetic frame generator: the toy stand-in for endoscopic video.
 *
 * Each task class maps to a distinct oriented sinusoidal texture; frames
 * show the texture of the task being performed plus pixel noise. The
 * mapping is fixed, so a model that reads frames can recover the task,
 * and generation is deterministic per (labels, seed).
 */

import { N_CLASSES } from "./csv";
import { mulberry32, Rng } from "./rng";

export const FRAME_H = 10;
export const FRAME_W = 10;
export const NOISE_AMPLITUDE = 0.08;

export interface FrameStream {
  /** [nFrames * FRAME_H * FRAME_W] row-major grayscale in [0, 1]. */
  pixels: Float32Array;
  nFrames: number;
}

function paintFrame(out: Float32Array, offset: number, label: number, rng: Rng): void {
  const fx = 1 + (label % 4);
  const fy = 1 + (Math.floor(label / 4) % 4);
  const phase = label * 0.7;
  for (let r = 0; r < FRAME_H; r++) {
    for (let c = 0; c < FRAME_W; c++) {
      const wave = Math.sin(2 * Math.PI * (fx * r / FRAME_H + fy * c / FRAME_W) + phase);
      out[offset + r * FRAME_W + c] =
        0.5 + 0.45 * wave + NOISE_AMPLITUDE * (rng() * 2 - 1);
    }
  }
}

export function synthesizeFrames(labels: ArrayLike<number>, seed: number): FrameStream {
  const rng = mulberry32(seed);
  const size = FRAME_H * FRAME_W;
  const pixels = new Float32Array(labels.length * size);
  for (let i = 0; i < labels.length; i++) {
    const label = labels[i];
    if (label < 0 || label >= N_CLASSES) {
      throw new Error(`label ${label} outside 0..${N_CLASSES - 1}`);
    }
    paintFrame(pixels, i * size, label, rng);
  }
  return { pixels, nFrames: labels.length };
}

export function frameAt(stream: FrameStream, index: number): Float32Array {
  const size = FRAME_H * FRAME_W;
  return stream.pixels.subarray(index * size, (index + 1) * size);
}
