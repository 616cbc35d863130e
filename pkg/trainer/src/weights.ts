/**
 * File persistence for models: pure @tensorflow/tfjs ships no
 * filesystem IO handlers, so topology + weight manifest go to
 * `<path>.json` and the raw weight bytes to `<path>.bin`.
 */

import * as fs from "fs";
import * as tf from "@tensorflow/tfjs";

export async function saveModel(model: tf.LayersModel, path: string): Promise<void> {
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer;
      fs.writeFileSync(
        path + ".json",
        JSON.stringify(
          {
            modelTopology: artifacts.modelTopology,
            weightSpecs: artifacts.weightSpecs,
            format: artifacts.format,
            generatedBy: artifacts.generatedBy,
          },
          null,
          2,
        ),
      );
      fs.writeFileSync(path + ".bin", Buffer.from(weightData));
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
    }),
  );
}

export async function loadModel(path: string): Promise<tf.LayersModel> {
  // Accept the bare prefix or either of the two files it names.
  const prefix = path.replace(/\.(json|bin)$/, "");
  const meta = JSON.parse(fs.readFileSync(prefix + ".json", "utf-8"));
  const bin = fs.readFileSync(prefix + ".bin");
  const weightData = bin.buffer.slice(bin.byteOffset, bin.byteOffset + bin.byteLength);
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: meta.modelTopology,
      weightSpecs: meta.weightSpecs,
      weightData,
    }),
  );
}
