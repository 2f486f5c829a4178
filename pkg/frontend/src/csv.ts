/** Reading/writing the engine's labels.csv format (frame_index, task_id). */

import * as fs from "fs";

export const N_CLASSES = 13; // idle 0 + tasks 1..12

export function readLabelsCsv(path: string): number[] {
  const text = fs.readFileSync(path, "utf-8");
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines[0] !== "frame_index,task_id") {
    throw new Error(`${path}: expected header frame_index,task_id`);
  }
  const labels: number[] = [];
  for (let i = 1; i < lines.length; i++) {
    const [idx, task] = lines[i].split(",").map((v) => parseInt(v, 10));
    if (!Number.isInteger(idx) || idx !== i - 1) {
      throw new Error(`${path}:${i + 1}: frame_index out of order`);
    }
    if (!Number.isInteger(task) || task < 0 || task >= N_CLASSES) {
      throw new Error(`${path}:${i + 1}: task_id ${task} outside 0..12`);
    }
    labels.push(task);
  }
  if (labels.length === 0) {
    throw new Error(`${path}: no label rows`);
  }
  return labels;
}

export function writeLabelsCsv(path: string, labels: ArrayLike<number>): void {
  const rows = ["frame_index,task_id"];
  for (let i = 0; i < labels.length; i++) {
    rows.push(`${i},${labels[i]}`);
  }
  fs.writeFileSync(path, rows.join("\n") + "\n");
}
