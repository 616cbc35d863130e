import * as tf from "@tensorflow/tfjs";
import { beforeAll, describe, expect, it } from "vitest";

import { installFastBackwardPaths } from "../src/convgrad";
import { buildUnet, complexMse, DEFAULT_CONFIG } from "../src/model";

beforeAll(() => {
  tf.setBackend("cpu");
});

/**
 * Central-difference check of the backward pass on a small network.
 *
 * Two measurement hazards need care.  The head starts as the zero map,
 * which makes every upstream gradient exactly zero, so the head
 * weights are first moved to a random point.  And the loss is float32
 * and piecewise linear in any one weight, so a secant is only a valid
 * derivative estimate where halving the step leaves it unchanged; the
 * check probes the largest-gradient entries, keeps the step-stable
 * ones, and Richardson-extrapolates those.  A genuinely broken
 * backward pass shows up as a step-stable secant that disagrees with
 * the analytic value, which the stability filter cannot hide.
 */
describe("backpropagation", () => {
  it("matches central finite differences", () => {
    const cfg = { ...DEFAULT_CONFIG, n: 16, firstKernel: 5, depth: 1, baseWidth: 4, seed: 21 };
    const model = buildUnet(cfg);

    const findVar = (p: (s: number[]) => boolean) =>
      model.trainableWeights.find((w) => p(w.shape as number[]))!.read() as tf.Variable;
    const headKernel = findVar((s) => s.length === 3 && s[0] === 1 && s[2] === 2);
    const headBias = findVar((s) => s.length === 1 && s[0] === 2);
    headKernel.assign(tf.randomNormal(headKernel.shape, 0, 1.0, "float32", 31));
    headBias.assign(tf.randomNormal(headBias.shape, 0, 0.3, "float32", 32));
    const stemKernel = findVar((s) => s.length === 3 && s[0] === 5 && s[1] === 2);

    const x = tf.randomNormal([8, 16, 2], 0, 0.7, "float32", 41) as tf.Tensor3D;
    const t = tf.randomNormal([8, 16, 2], 0, 0.7, "float32", 42) as tf.Tensor3D;
    const loss = () => complexMse(model.apply(x) as tf.Tensor3D, t);

    for (const variable of [stemKernel, headKernel]) {
      const { grads } = tf.variableGrads(loss, [variable]);
      const analytic = Array.from(grads[variable.name].dataSync());
      const base = Array.from(variable.dataSync());

      const secant = (i: number, delta: number): number => {
        const plus = base.slice();
        const minus = base.slice();
        plus[i] += delta;
        minus[i] -= delta;
        variable.assign(tf.tensor(plus, variable.shape, "float32"));
        const lp = loss().dataSync()[0];
        variable.assign(tf.tensor(minus, variable.shape, "float32"));
        const lm = loss().dataSync()[0];
        return (lp - lm) / (2 * delta);
      };

      const pool = analytic
        .map((g, i) => ({ g: Math.abs(g), i }))
        .sort((a, b) => b.g - a.g)
        .slice(0, 16);
      let checked = 0;
      for (const { i } of pool) {
        const coarse = secant(i, 4e-3);
        const fine = secant(i, 2e-3);
        const scale = Math.max(Math.abs(analytic[i]), 1e-6);
        if (Math.abs(coarse - fine) / scale > 5e-4) {
          continue;
        }
        const numeric = (4 * fine - coarse) / 3;
        expect(Math.abs(numeric - analytic[i]) / scale).toBeLessThan(1e-3);
        checked++;
      }
      variable.assign(tf.tensor(base, variable.shape, "float32"));
      expect(checked).toBeGreaterThanOrEqual(2);
    }
    tf.dispose([x, t]);
  });
});

/**
 * Independent loop-level reference for the 1-D convolution gradients
 * computed by the replacement Conv2D gradient.  Works directly on the
 * flat arrays, so it shares no code with the implementation under test.
 */
function naiveConv1dGrads(
  x: Float32Array,
  batch: number,
  inW: number,
  inCh: number,
  w: Float32Array,
  kW: number,
  outCh: number,
  dy: Float32Array,
  outW: number,
  stride: number,
): { dw: Float32Array; dx: Float32Array } {
  const padLeft = Math.floor(Math.max((outW - 1) * stride + kW - inW, 0) / 2);
  const dw = new Float32Array(kW * inCh * outCh);
  const dx = new Float32Array(x.length);
  for (let b = 0; b < batch; b++) {
    for (let wo = 0; wo < outW; wo++) {
      for (let kw = 0; kw < kW; kw++) {
        const wIn = wo * stride + kw - padLeft;
        if (wIn < 0 || wIn >= inW) continue;
        for (let ci = 0; ci < inCh; ci++) {
          for (let co = 0; co < outCh; co++) {
            const dyv = dy[(b * outW + wo) * outCh + co];
            dw[(kw * inCh + ci) * outCh + co] += x[(b * inW + wIn) * inCh + ci] * dyv;
            dx[(b * inW + wIn) * inCh + ci] += w[(kw * inCh + ci) * outCh + co] * dyv;
          }
        }
      }
    }
  }
  return { dw, dx };
}

describe("split kernel replacement", () => {
  function sliceNested(arr: unknown, axis: number, start: number, size: number): unknown {
    if (axis === 0) {
      return (arr as unknown[]).slice(start, start + size);
    }
    return (arr as unknown[]).map((sub) => sliceNested(sub, axis - 1, start, size));
  }

  it("matches direct slicing on every axis", () => {
    installFastBackwardPaths();
    const x = tf.linspace(0, 23, 24).reshape([2, 3, 4]);
    const nested = x.arraySync();
    const plans: Array<{ axis: number; sizes: number[] }> = [
      { axis: 0, sizes: [1, 1] },
      { axis: 1, sizes: [2, 1] },
      { axis: 2, sizes: [1, 3] },
    ];
    for (const { axis, sizes } of plans) {
      const parts = tf.split(x, sizes, axis);
      let start = 0;
      parts.forEach((part, i) => {
        expect(part.arraySync()).toEqual(sliceNested(nested, axis, start, sizes[i]));
        start += sizes[i];
        part.dispose();
      });
    }
    x.dispose();
  });

  it("falls back to the stock kernel for int32 input", () => {
    installFastBackwardPaths();
    const x = tf.tensor2d([[1, 2, 3, 4], [5, 6, 7, 8]], [2, 4], "int32");
    const [a, b] = tf.split(x, [3, 1], 1);
    expect(a.dtype).toBe("int32");
    expect(Array.from(a.dataSync())).toEqual([1, 2, 3, 5, 6, 7]);
    expect(Array.from(b.dataSync())).toEqual([4, 8]);
    tf.dispose([x, a, b]);
  });
});

describe("convolution gradient replacement", () => {
  const cases = [
    { name: "stride 1", inW: 8, kW: 3, stride: 1, inCh: 3, outCh: 2 },
    { name: "stride 2 odd width", inW: 9, kW: 3, stride: 2, inCh: 2, outCh: 3 },
  ];

  for (const c of cases) {
    it(`matches a loop-level reference at ${c.name}`, () => {
      installFastBackwardPaths();
      const batch = 2;
      const x = tf.randomNormal([batch, 1, c.inW, c.inCh], 0, 1, "float32", 51) as tf.Tensor4D;
      const w = tf.randomNormal([1, c.kW, c.inCh, c.outCh], 0, 1, "float32", 52) as tf.Tensor4D;
      const outW = Math.ceil(c.inW / c.stride);
      const upstream = tf.randomNormal([batch, 1, outW, c.outCh], 0, 1, "float32", 53);

      const [gx, gw] = tf.grads((xv, wv) =>
        tf.conv2d(xv as tf.Tensor4D, wv as tf.Tensor4D, c.stride, "same").mul(upstream).sum(),
      )([x, w]);

      const ref = naiveConv1dGrads(
        x.dataSync() as Float32Array,
        batch,
        c.inW,
        c.inCh,
        w.dataSync() as Float32Array,
        c.kW,
        c.outCh,
        upstream.dataSync() as Float32Array,
        outW,
        c.stride,
      );

      const got = { dw: gw.dataSync(), dx: gx.dataSync() };
      for (const key of ["dw", "dx"] as const) {
        const a = got[key];
        const b = ref[key];
        expect(a.length).toBe(b.length);
        let scale = 1e-12;
        for (let i = 0; i < b.length; i++) scale = Math.max(scale, Math.abs(b[i]));
        for (let i = 0; i < a.length; i++) {
          expect(Math.abs(a[i] - b[i])).toBeLessThan(1e-5 * scale);
        }
      }
      tf.dispose([x, w, upstream, gx, gw]);
    });
  }
});
