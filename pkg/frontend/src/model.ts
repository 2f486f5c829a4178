/**
 * Windowed CNN-LSTM task recognizer.
 *
 * A stream of N frames enters a weight-shared per-frame encoder whose
 * outputs stack into the feature matrix Phi (N x F per window). A
 * bidirectional LSTM reads the stacked features and a per-frame softmax
 * head emits one of 13 classes (idle + 12 tasks) for every frame.
 */

import * as tf from "@tensorflow/tfjs";
import * as fs from "fs";

import { N_CLASSES } from "./csv";
import { FRAME_H, FRAME_W } from "./frames";
import { WindowConfig } from "./windows";

export interface ModelConfig {
  featureDim: number; // F
  recurrentUnits: number;
  bidirectional: boolean;
}

/** Desk-scale defaults; the clinical-scale encoder would use F=1024, 256 units. */
export const DESK_MODEL: ModelConfig = {
  featureDim: 64,
  recurrentUnits: 32,
  bidirectional: true,
};

export interface RecognizerBundle {
  model: tf.LayersModel;
  /** Same weights, truncated at the feature matrix: output [batch, N, F]. */
  phiModel: tf.LayersModel;
}

export function buildModel(
  windowCfg: WindowConfig,
  cfg: ModelConfig = DESK_MODEL,
  seed = 1
): RecognizerBundle {
  const td = (layer: tf.layers.Layer) => tf.layers.timeDistributed({ layer });
  const glorot = (s: number) => tf.initializers.glorotUniform({ seed: seed + s });

  const frames = tf.input({ shape: [windowCfg.nFrames, FRAME_H, FRAME_W, 1] });
  let x = td(
    tf.layers.conv2d({
      filters: 6,
      kernelSize: 3,
      strides: 2,
      activation: "relu",
      kernelInitializer: glorot(0),
    })
  ).apply(frames) as tf.SymbolicTensor;
  x = td(tf.layers.flatten()).apply(x) as tf.SymbolicTensor;
  const phi = td(
    tf.layers.dense({
      units: cfg.featureDim,
      activation: "relu",
      kernelInitializer: glorot(1),
      name: "frame_features",
    })
  ).apply(x) as tf.SymbolicTensor;

  const lstm = tf.layers.lstm({
    units: cfg.recurrentUnits,
    returnSequences: true,
    kernelInitializer: glorot(2),
    recurrentInitializer: glorot(3),
  });
  const recurrent = cfg.bidirectional
    ? (tf.layers
        .bidirectional({ layer: lstm as tf.layers.RNN })
        .apply(phi) as tf.SymbolicTensor)
    : (lstm.apply(phi) as tf.SymbolicTensor);

  const out = td(
    tf.layers.dense({
      units: N_CLASSES,
      activation: "softmax",
      kernelInitializer: glorot(4),
    })
  ).apply(recurrent) as tf.SymbolicTensor;

  const model = tf.model({ inputs: frames, outputs: out });
  const phiModel = tf.model({ inputs: frames, outputs: phi });
  return { model, phiModel };
}

export function compileForTraining(model: tf.LayersModel, learningRate = 0.05): void {
  model.compile({
    optimizer: tf.train.momentum(learningRate, 0.9),
    loss: "categoricalCrossentropy",
    metrics: ["accuracy"],
  });
}

// Checkpoints are a single JSON file (topology + base64 weights) so no
// filesystem IO handler package is needed.
export async function saveModel(model: tf.LayersModel, path: string): Promise<void> {
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const data = artifacts.weightData as ArrayBuffer;
      const payload = {
        modelTopology: artifacts.modelTopology,
        weightSpecs: artifacts.weightSpecs,
        weightDataBase64: Buffer.from(data).toString("base64"),
      };
      fs.writeFileSync(path, JSON.stringify(payload));
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
    })
  );
}

export async function loadModel(path: string): Promise<tf.LayersModel> {
  const payload = JSON.parse(fs.readFileSync(path, "utf-8"));
  const weightData = Uint8Array.from(
    Buffer.from(payload.weightDataBase64, "base64")
  ).buffer;
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: payload.modelTopology,
      weightSpecs: payload.weightSpecs,
      weightData,
    })
  );
}
