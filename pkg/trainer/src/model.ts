/**
 * 1-D U-Net for single-channel separation on real/imag-stacked windows.
 *
 * The network regresses the clean source window from the mixture
 * window, both shaped [n, 2].  A long first kernel covers the sources'
 * correlation span; stride-2 convolutions downsample through `depth`
 * encoder blocks, mirrored nearest-neighbor upsampling decodes, and
 * skip connections concatenate encoder features at matching scales.
 * The output head is a zero-initialized 1x1 linear convolution, so an
 * untrained network predicts exactly zero and starts from the 0 dB MSE
 * of the trivial estimator.
 */

import * as tf from "@tensorflow/tfjs";

import { installFastBackwardPaths } from "./convgrad";

installFastBackwardPaths();

export interface UNetConfig {
  n: number;
  firstKernel: number;
  depth: number;
  baseWidth: number;
  learningRate: number;
  lrDecay: number;
  decayEvery: number;
  batchSize: number;
  maxEpochs: number;
  patience: number;
  seed: number;
}

export const DEFAULT_CONFIG: UNetConfig = {
  n: 256,
  firstKernel: 65,
  depth: 4,
  baseWidth: 32,
  learningRate: 1e-3,
  lrDecay: 0.95,
  decayEvery: 10,
  batchSize: 32,
  maxEpochs: 200,
  patience: 25,
  seed: 0,
};

export function validateConfig(cfg: UNetConfig): void {
  if (cfg.firstKernel < 1) throw new Error(`firstKernel must be >= 1, got ${cfg.firstKernel}`);
  if (cfg.depth < 1) throw new Error(`depth must be >= 1, got ${cfg.depth}`);
  if (cfg.n % (1 << cfg.depth) !== 0) {
    throw new Error(`window length ${cfg.n} is not divisible by 2^depth = ${1 << cfg.depth}`);
  }
  if (cfg.baseWidth < 1) throw new Error(`baseWidth must be >= 1, got ${cfg.baseWidth}`);
  if (cfg.batchSize < 1) throw new Error(`batchSize must be >= 1, got ${cfg.batchSize}`);
  if (cfg.patience < 1) throw new Error(`patience must be >= 1, got ${cfg.patience}`);
}

function conv(
  x: tf.SymbolicTensor,
  filters: number,
  kernel: number,
  seed: number,
  opts: { strides?: number; relu?: boolean } = {},
): tf.SymbolicTensor {
  return tf.layers
    .conv1d({
      filters,
      kernelSize: kernel,
      strides: opts.strides ?? 1,
      padding: "same",
      activation: opts.relu === false ? undefined : "relu",
      kernelInitializer: tf.initializers.heNormal({ seed }),
      biasInitializer: "zeros",
    })
    .apply(x) as tf.SymbolicTensor;
}

/**
 * Nearest-neighbour upsampling by two along the sample axis.  There is
 * no 1-D upsampling layer, and the obvious detour through the 2-D
 * image resize backpropagates incorrectly for batched input on the cpu
 * backend, so instead duplicate the channel axis and refold: row-major
 * layout turns [len, 2 * ch] into [2 * len, ch] with every time step
 * repeated twice.
 */
function upsample2x(x: tf.SymbolicTensor): tf.SymbolicTensor {
  const len = x.shape[1] as number;
  const ch = x.shape[2] as number;
  const doubled = tf.layers.concatenate({ axis: 2 }).apply([x, x]) as tf.SymbolicTensor;
  return tf.layers.reshape({ targetShape: [2 * len, ch] }).apply(doubled) as tf.SymbolicTensor;
}

export function buildUnet(cfg: UNetConfig): tf.LayersModel {
  validateConfig(cfg);
  const input = tf.input({ shape: [cfg.n, 2] });

  let x = conv(input, cfg.baseWidth, cfg.firstKernel, cfg.seed + 1);
  const skips: tf.SymbolicTensor[] = [];
  for (let d = 0; d < cfg.depth; d++) {
    const width = cfg.baseWidth << d;
    x = conv(x, width, 3, cfg.seed + 10 + 3 * d);
    skips.push(x);
    x = conv(x, width * 2, 3, cfg.seed + 11 + 3 * d, { strides: 2 });
  }

  x = conv(x, cfg.baseWidth << cfg.depth, 3, cfg.seed + 100);

  for (let d = cfg.depth - 1; d >= 0; d--) {
    const width = cfg.baseWidth << d;
    x = upsample2x(x);
    x = conv(x, width, 3, cfg.seed + 200 + 3 * d);
    x = tf.layers.concatenate().apply([skips[d], x]) as tf.SymbolicTensor;
    x = conv(x, width, 3, cfg.seed + 201 + 3 * d);
  }

  const head = tf.layers
    .conv1d({
      filters: 2,
      kernelSize: 1,
      padding: "same",
      activation: "linear",
      kernelInitializer: "zeros",
      biasInitializer: "zeros",
    })
    .apply(x) as tf.SymbolicTensor;

  return tf.model({ inputs: input, outputs: head });
}

/**
 * Mean squared error per complex sample: sum of squared real and
 * imaginary residuals over the window divided by n, averaged over the
 * batch.  Matches the metric the estimator curves report.
 */
export function complexMse(pred: tf.Tensor3D, target: tf.Tensor3D): tf.Scalar {
  return tf.tidy(() => {
    const diff = pred.sub(target);
    const perRecord = diff.square().sum([1, 2]);
    const n = target.shape[1];
    return perRecord.mean().div(n) as tf.Scalar;
  });
}

/** Per-record squared error, length = batch, each entry ||shat - s||^2 / n. */
export function complexMsePerRecord(pred: tf.Tensor3D, target: tf.Tensor3D): Float64Array {
  const vals = tf.tidy(() => {
    const diff = pred.sub(target);
    return diff.square().sum([1, 2]).div(target.shape[1]);
  });
  const out = Float64Array.from(vals.dataSync());
  vals.dispose();
  return out;
}

export function parameterCount(model: tf.LayersModel): number {
  return model.getWeights().reduce((acc, w) => acc + w.size, 0);
}
