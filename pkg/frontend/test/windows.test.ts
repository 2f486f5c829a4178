import { describe, expect, it } from "vitest";

import { synthesizeFrames } from "../src/frames";
import {
  DEFAULT_WINDOW,
  StreamTooShortError,
  sampleWindows,
  strideOf,
  windowStarts,
} from "../src/windows";

describe("window sampling", () => {
  it("uses stride N*(1-O): 64 frames, N=32, O=0.5 -> starts 0,16,32", () => {
    expect(strideOf({ nFrames: 32, overlap: 0.5 })).toBe(16);
    expect(windowStarts(64, { nFrames: 32, overlap: 0.5 })).toEqual([0, 16, 32]);
  });

  it("yields exactly one window when the stream equals N with O=0", () => {
    expect(windowStarts(32, { nFrames: 32, overlap: 0 })).toEqual([0]);
  });

  it("rejects streams shorter than one window", () => {
    expect(() => windowStarts(10, { nFrames: 32, overlap: 0.5 })).toThrow(
      StreamTooShortError
    );
  });

  it("rejects malformed configs", () => {
    expect(() => windowStarts(64, { nFrames: 1, overlap: 0 })).toThrow();
    expect(() => windowStarts(64, { nFrames: 32, overlap: 1 })).toThrow();
  });

  it("keeps one label per frame inside each window", () => {
    const labels = Array.from({ length: 80 }, (_, i) => (i < 40 ? 3 : 7));
    const stream = synthesizeFrames(labels, 5);
    const batch = sampleWindows(stream, labels, DEFAULT_WINDOW);
    expect(batch.starts).toEqual([0, 16, 32, 48]);
    expect(batch.y.length).toBe(4 * 32);
    // Window starting at 32 straddles the 3->7 switch at frame 40.
    const third = Array.from(batch.y.slice(2 * 32, 3 * 32));
    expect(third.slice(0, 8)).toEqual(Array(8).fill(3));
    expect(third.slice(8)).toEqual(Array(24).fill(7));
  });

  it("copies the exact pixels of each frame", () => {
    const labels = [1, 2, 3, 4, 5, 6];
    const stream = synthesizeFrames(labels, 9);
    const batch = sampleWindows(stream, labels, { nFrames: 4, overlap: 0.5 });
    const size = stream.pixels.length / labels.length;
    const windowOne = batch.x.slice(1 * 4 * size, 1 * 4 * size + size);
    expect(Array.from(windowOne)).toEqual(
      Array.from(stream.pixels.slice(2 * size, 3 * size))
    );
  });
});
