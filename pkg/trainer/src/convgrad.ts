import * as tf from "@tensorflow/tfjs";

/**
 * Faster backward pass for convolution layers on the cpu backend.
 *
 * Profiling a training step shows two stock kernels consuming nearly
 * all of the step time at the window sizes used here.  The filter
 * gradient of Conv2D runs orders of magnitude slower than its
 * arithmetic justifies, and SplitV, which carries every concatenation
 * gradient, copies at a few megabytes per second.  This module swaps
 * in a replacement gradient for the Conv2D kernel that computes the
 * filter gradient with plain typed-array loops and double precision
 * accumulation, keeps the input gradient on the built-in
 * transposed-convolution path, which is adequate, and replaces the cpu
 * SplitV kernel with contiguous block copies.
 *
 * The gradient replacement supports what the model builder emits, NHWC
 * layout with dilation one, and rejects anything else loudly so an
 * unsupported configuration can never train on wrong gradients.
 */

interface Conv2dGradAttrs {
  strides: number | [number, number];
  pad: "valid" | "same" | number | number[][];
  dataFormat: "NHWC" | "NCHW";
  dilations: number | [number, number];
  dimRoundingMode?: "floor" | "round" | "ceil";
}

function asPair(v: number | [number, number]): [number, number] {
  return Array.isArray(v) ? v : [v, v];
}

/** Top and left zero padding implied by a conv2d pad argument. */
function padOffsets(
  pad: Conv2dGradAttrs["pad"],
  inSize: [number, number],
  outSize: [number, number],
  kernel: [number, number],
  strides: [number, number],
): [number, number] {
  if (pad === "valid") {
    return [0, 0];
  }
  if (pad === "same") {
    const along = (axis: number) =>
      Math.max(
        (outSize[axis] - 1) * strides[axis] + kernel[axis] - inSize[axis],
        0,
      );
    return [Math.floor(along(0) / 2), Math.floor(along(1) / 2)];
  }
  if (typeof pad === "number") {
    return [pad, pad];
  }
  return [pad[1][0], pad[2][0]];
}

/**
 * Accumulates d(loss)/d(filter) for a forward conv2d in double
 * precision.  Layouts match the tensors exactly: x is NHWC, dy is
 * NHWC over the output grid, and the result is [kH, kW, inCh, outCh]
 * row-major, the same layout conv2d expects for its filter.
 */
function filterGradientBuffer(
  x: Float32Array,
  xShape: [number, number, number, number],
  dy: Float32Array,
  dyShape: [number, number, number, number],
  kernel: [number, number],
  strides: [number, number],
  padTopLeft: [number, number],
): Float32Array {
  const [batch, inH, inW, inCh] = xShape;
  const [, outH, outW, outCh] = dyShape;
  const [kH, kW] = kernel;
  const [sH, sW] = strides;
  const [padT, padL] = padTopLeft;
  const acc = new Float64Array(kH * kW * inCh * outCh);
  for (let b = 0; b < batch; b++) {
    for (let ho = 0; ho < outH; ho++) {
      for (let wo = 0; wo < outW; wo++) {
        const dyBase = ((b * outH + ho) * outW + wo) * outCh;
        for (let kh = 0; kh < kH; kh++) {
          const hIn = ho * sH + kh - padT;
          if (hIn < 0 || hIn >= inH) {
            continue;
          }
          for (let kw = 0; kw < kW; kw++) {
            const wIn = wo * sW + kw - padL;
            if (wIn < 0 || wIn >= inW) {
              continue;
            }
            const xBase = ((b * inH + hIn) * inW + wIn) * inCh;
            const accBase = (kh * kW + kw) * inCh * outCh;
            for (let ci = 0; ci < inCh; ci++) {
              const xv = x[xBase + ci];
              const accRow = accBase + ci * outCh;
              for (let co = 0; co < outCh; co++) {
                acc[accRow + co] += xv * dy[dyBase + co];
              }
            }
          }
        }
      }
    }
  }
  return Float32Array.from(acc);
}

/**
 * Replacement SplitV kernel for the cpu backend.  The stock kernel
 * routes every split through a generic per-element slice, which moves
 * the concatenation gradients in a training step at a few megabytes
 * per second.  A split is a sequence of contiguous block copies, one
 * per index of the leading axes, so this kernel does exactly that and
 * falls back to the stock kernel for non-float32 input.
 */
function splitVFast(
  original: (args: unknown) => unknown,
): (args: unknown) => unknown {
  return (args: unknown) => {
    const { inputs, backend, attrs } = args as {
      inputs: { x: { shape: number[]; dtype: string; dataId: object } };
      backend: {
        data: { get(id: object): { values: Float32Array } };
        makeTensorInfo(shape: number[], dtype: string, values: Float32Array): unknown;
      };
      attrs: { numOrSizeSplits: number | number[]; axis: number };
    };
    const { x } = inputs;
    if (x.dtype !== "float32") {
      return original(args);
    }
    const axis = tf.util.parseAxisParam(attrs.axis, x.shape)[0];
    const sizes = tf.backend_util.prepareSplitSize(
      x as unknown as tf.TensorInfo,
      attrs.numOrSizeSplits,
      axis,
    );
    const inner = x.shape.slice(axis + 1).reduce((a, b) => a * b, 1);
    const outer = x.shape.slice(0, axis).reduce((a, b) => a * b, 1);
    const axisLen = x.shape[axis];
    const values = backend.data.get(x.dataId).values;
    let offset = 0;
    return sizes.map((size) => {
      const shape = x.shape.slice();
      shape[axis] = size;
      const out = new Float32Array(outer * size * inner);
      const block = size * inner;
      for (let o = 0; o < outer; o++) {
        const src = o * axisLen * inner + offset * inner;
        out.set(values.subarray(src, src + block), o * block);
      }
      offset += size;
      return backend.makeTensorInfo(shape, "float32", out);
    });
  };
}

let installed = false;

/**
 * Replaces the registered gradient of the Conv2D kernel and the cpu
 * SplitV kernel.  Idempotent, and safe to call before any model is
 * built; the model module calls it on import so every training path
 * picks it up.
 */
export function installFastBackwardPaths(): void {
  if (installed) {
    return;
  }

  const stockSplitV = tf.getKernel("SplitV", "cpu");
  if (stockSplitV) {
    tf.unregisterKernel("SplitV", "cpu");
    tf.registerKernel({
      kernelName: "SplitV",
      backendName: "cpu",
      kernelFunc: splitVFast(
        stockSplitV.kernelFunc as unknown as (args: unknown) => unknown,
      ) as unknown as typeof stockSplitV.kernelFunc,
    });
  }

  tf.unregisterGradient("Conv2D");
  tf.registerGradient({
    kernelName: "Conv2D",
    inputsToSave: ["x", "filter"],
    gradFunc: (dy: tf.Tensor | tf.Tensor[], saved: tf.Tensor[], attrs) => {
      const dy4 = dy as tf.Tensor4D;
      const [x4, filter4] = saved as [tf.Tensor4D, tf.Tensor4D];
      const { strides, pad, dataFormat, dilations, dimRoundingMode } =
        attrs as unknown as Conv2dGradAttrs;
      if (dataFormat !== "NHWC") {
        throw new Error(
          `conv2d gradient replacement supports NHWC only, got ${dataFormat}`,
        );
      }
      const [dH, dW] = asPair(dilations);
      if (dH !== 1 || dW !== 1) {
        throw new Error(
          "conv2d gradient replacement supports dilation 1 only, got " +
            `${dH} by ${dW}`,
        );
      }
      const stridePair = asPair(strides);
      const kernel: [number, number] = [filter4.shape[0], filter4.shape[1]];
      return {
        x: () =>
          tf.conv2dTranspose(
            dy4,
            filter4,
            x4.shape,
            stridePair,
            pad as "valid" | "same" | number,
            dimRoundingMode,
          ),
        filter: () => {
          const offsets = padOffsets(
            pad,
            [x4.shape[1], x4.shape[2]],
            [dy4.shape[1], dy4.shape[2]],
            kernel,
            stridePair,
          );
          const buffer = filterGradientBuffer(
            x4.dataSync() as Float32Array,
            x4.shape,
            dy4.dataSync() as Float32Array,
            dy4.shape,
            kernel,
            stridePair,
            offsets,
          );
          return tf.tensor4d(buffer, filter4.shape);
        },
      };
    },
  });
  installed = true;
}
