/**
 * Entry points mirroring the engine's path conventions:
 *
 *   node dist/cli.js train   --data <dir> --out model.json [--epochs 20]
 *                            [--seed 7] [--frame-seed 1] [--lr 0.05]
 *   node dist/cli.js predict --data <dir> --model model.json --out <dir>
 *                            [--frame-seed 1] [--labels-name labels_pred.csv]
 *
 * `--data` is a tree of procedure directories each holding labels.csv
 * (the engine's `generate` layout). Frames are synthesized from the
 * labels deterministically per procedure, standing in for video.
 */

import * as fs from "fs";
import * as path from "path";

import { readLabelsCsv, writeLabelsCsv } from "./csv";
import { synthesizeFrames } from "./frames";
import { buildModel, compileForTraining, loadModel, saveModel } from "./model";
import { predictStream } from "./predict";
import { concatBatches, frameAccuracy, trainModel } from "./train";
import { DEFAULT_WINDOW, sampleWindows } from "./windows";
import { hashString, mulberry32 } from "./rng";

interface Args {
  [key: string]: string;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {};
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${argv[i]}`);
    }
    args[argv[i].slice(2)] = argv[i + 1];
  }
  return args;
}

export function procedureDirs(dataDir: string): string[] {
  const dirs = fs
    .readdirSync(dataDir, { withFileTypes: true })
    .filter((d) => d.isDirectory())
    .map((d) => path.join(dataDir, d.name))
    .filter((d) => fs.existsSync(path.join(d, "labels.csv")))
    .sort();
  if (dirs.length === 0) {
    throw new Error(`no procedure directories under ${dataDir}`);
  }
  return dirs;
}

export function frameSeedFor(procedureId: string, frameSeed: number): number {
  return (hashString(procedureId) ^ frameSeed) >>> 0;
}

export async function trainCommand(args: Args): Promise<void> {
  const dataDir = args["data"];
  const outPath = args["out"];
  if (!dataDir || !outPath) throw new Error("train requires --data and --out");
  const epochs = parseInt(args["epochs"] ?? "20", 10);
  const seed = parseInt(args["seed"] ?? "7", 10);
  const frameSeed = parseInt(args["frame-seed"] ?? "1", 10);
  const lr = parseFloat(args["lr"] ?? "0.05");

  const batches = [];
  for (const dir of procedureDirs(dataDir)) {
    const pid = path.basename(dir);
    const labels = readLabelsCsv(path.join(dir, "labels.csv"));
    const stream = synthesizeFrames(labels, frameSeedFor(pid, frameSeed));
    batches.push(sampleWindows(stream, labels, DEFAULT_WINDOW));
  }
  let batch = concatBatches(batches);
  // Deterministic shuffle of window order (the optimizer sees mixed tasks).
  const rng = mulberry32(seed);
  const order = batch.starts.map((_, i) => i);
  for (let i = order.length - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  batch = reorderWindows(batch, order);

  const { model } = buildModel(DEFAULT_WINDOW, undefined, seed);
  compileForTraining(model, lr);
  const history = await trainModel(model, batch, {
    epochs,
    batchSize: 10,
    learningRate: lr,
    targetAccuracy: 0.97,
    verbose: true,
  });
  console.log(
    `trained ${history.loss.length} epochs; ` +
      `initial loss ${history.initialLoss.toFixed(4)}, ` +
      `final acc ${history.accuracy[history.accuracy.length - 1].toFixed(3)}`
  );
  await saveModel(model, outPath);
  console.log(`saved model to ${outPath}`);
}

function reorderWindows(batch: ReturnType<typeof concatBatches>, order: number[]) {
  const frameSize = batch.x.length / batch.starts.length;
  const labelSize = batch.nFrames;
  const x = new Float32Array(batch.x.length);
  const y = new Int32Array(batch.y.length);
  order.forEach((src, dst) => {
    x.set(batch.x.subarray(src * frameSize, (src + 1) * frameSize), dst * frameSize);
    y.set(batch.y.subarray(src * labelSize, (src + 1) * labelSize), dst * labelSize);
  });
  return { x, y, starts: order.map((i) => batch.starts[i]), nFrames: batch.nFrames };
}

export async function predictCommand(args: Args): Promise<void> {
  const dataDir = args["data"];
  const modelPath = args["model"];
  const outDir = args["out"];
  if (!dataDir || !modelPath || !outDir) {
    throw new Error("predict requires --data, --model and --out");
  }
  const frameSeed = parseInt(args["frame-seed"] ?? "1", 10);
  const labelsName = args["labels-name"] ?? "labels_pred.csv";

  const model = await loadModel(modelPath);
  for (const dir of procedureDirs(dataDir)) {
    const pid = path.basename(dir);
    const gtLabels = readLabelsCsv(path.join(dir, "labels.csv"));
    const stream = synthesizeFrames(gtLabels, frameSeedFor(pid, frameSeed));
    const predicted = await predictStream(model, stream, DEFAULT_WINDOW);
    const target = path.join(outDir, pid);
    fs.mkdirSync(target, { recursive: true });
    writeLabelsCsv(path.join(target, labelsName), predicted);
    const correct = predicted.reduce(
      (acc, v, i) => acc + (v === gtLabels[i] ? 1 : 0),
      0
    );
    console.log(
      `${pid}: ${predicted.length} frames, accuracy ${(correct / predicted.length).toFixed(3)}`
    );
  }
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  const args = parseArgs(rest);
  if (command === "train") {
    await trainCommand(args);
  } else if (command === "predict") {
    await predictCommand(args);
  } else {
    console.error("usage: cli.js <train|predict> --data <dir> ...");
    process.exit(1);
  }
}

if (require.main === module) {
  main().catch((err) => {
    console.error(err instanceof Error ? err.message : err);
    process.exit(1);
  });
}
