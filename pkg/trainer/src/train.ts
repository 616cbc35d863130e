/**
 * Training loop: Adam on the complex-sample MSE with seeded shuffling,
 * exponential learning-rate decay, and early stopping that retains the
 * best-validation weights.
 */

import * as tf from "@tensorflow/tfjs";

import { Dataset, toChannelArrays } from "./dataset";
import { complexMse, UNetConfig } from "./model";
import { mulberry32, shuffleInPlace } from "./random";

export interface TrainReport {
  bestValLoss: number;
  epochsRun: number;
  stoppedEarly: boolean;
  trainLossPerEpoch: number[];
  valLossPerEpoch: number[];
}

function assertTrainable(ds: Dataset, cfg: UNetConfig, label: string): void {
  if (ds.n !== cfg.n) {
    throw new Error(`${label} dataset has window length ${ds.n}, config expects ${cfg.n}`);
  }
  if (ds.latents || ds.records.some((r) => r.tauS !== undefined)) {
    throw new Error(`${label} dataset carries latent fields; train on latent-free exports`);
  }
  if (ds.records.length === 0) {
    throw new Error(`${label} dataset is empty`);
  }
}

export async function trainModel(
  model: tf.LayersModel,
  cfg: UNetConfig,
  train: Dataset,
  val: Dataset,
  log: (msg: string) => void = () => {},
): Promise<TrainReport> {
  assertTrainable(train, cfg, "train");
  assertTrainable(val, cfg, "validation");

  const tr = toChannelArrays(train);
  const va = toChannelArrays(val);
  const x = tf.tensor3d(tr.x, tr.shape);
  const t = tf.tensor3d(tr.t, tr.shape);
  const xv = tf.tensor3d(va.x, va.shape);
  const tv = tf.tensor3d(va.t, va.shape);

  const count = tr.shape[0];
  const order = new Int32Array(count);
  const rng = mulberry32(cfg.seed ^ 0x5eed);

  let lr = cfg.learningRate;
  const optimizer = tf.train.adam(lr);

  let bestValLoss = Infinity;
  let bestWeights: tf.Tensor[] | null = null;
  let sinceImprovement = 0;
  let stoppedEarly = false;
  const trainLossPerEpoch: number[] = [];
  const valLossPerEpoch: number[] = [];
  let epoch = 0;

  try {
    for (; epoch < cfg.maxEpochs; epoch++) {
      if (epoch > 0 && epoch % cfg.decayEvery === 0) {
        lr *= cfg.lrDecay;
        // tfjs optimizers read this field on every applyGradients call,
        // so assigning it decays the rate without resetting Adam moments
        (optimizer as unknown as { learningRate: number }).learningRate = lr;
      }
      for (let i = 0; i < count; i++) order[i] = i;
      shuffleInPlace(order, rng);

      let epochLoss = 0;
      let batches = 0;
      for (let start = 0; start < count; start += cfg.batchSize) {
        const idx = order.slice(start, Math.min(start + cfg.batchSize, count));
        const loss = tf.tidy(() => {
          const bi = tf.tensor1d(idx, "int32");
          const bx = tf.gather(x, bi) as tf.Tensor3D;
          const bt = tf.gather(t, bi) as tf.Tensor3D;
          const l = optimizer.minimize(
            () => complexMse(model.apply(bx, { training: true }) as tf.Tensor3D, bt),
            true,
          ) as tf.Scalar;
          return l.dataSync()[0];
        });
        if (!Number.isFinite(loss)) {
          throw new Error(
            `non-finite training loss ${loss} at epoch ${epoch}, batch ${batches}; ` +
              `lr=${lr}, batchSize=${cfg.batchSize}`,
          );
        }
        epochLoss += loss;
        batches += 1;
      }
      trainLossPerEpoch.push(epochLoss / batches);

      const valLoss = tf.tidy(
        () => complexMse(model.predict(xv) as tf.Tensor3D, tv).dataSync()[0],
      );
      valLossPerEpoch.push(valLoss);
      log(
        `epoch ${epoch}: train ${(epochLoss / batches).toExponential(4)} ` +
          `val ${valLoss.toExponential(4)} lr ${lr.toExponential(2)}`,
      );

      if (valLoss < bestValLoss) {
        bestValLoss = valLoss;
        if (bestWeights) bestWeights.forEach((w) => w.dispose());
        bestWeights = model.getWeights().map((w) => w.clone());
        sinceImprovement = 0;
      } else {
        sinceImprovement += 1;
        if (sinceImprovement >= cfg.patience) {
          stoppedEarly = true;
          epoch += 1;
          break;
        }
      }

      // The cpu backend computes synchronously, so without this yield a
      // long run starves the host event loop of every timer and message
      // for minutes at a stretch
      await new Promise((resolve) => setImmediate(resolve));
    }

    if (bestWeights) {
      model.setWeights(bestWeights);
    }
  } finally {
    if (bestWeights) bestWeights.forEach((w) => w.dispose());
    x.dispose();
    t.dispose();
    xv.dispose();
    tv.dispose();
  }

  return {
    bestValLoss,
    epochsRun: epoch,
    stoppedEarly,
    trainLossPerEpoch,
    valLossPerEpoch,
  };
}
