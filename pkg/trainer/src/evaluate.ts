/**
 * Per-level evaluation in the estimator-curve schema.  Each test file
 * holds records for one interference level; its SIR label comes from
 * the export metadata (a single-level mixture) or, failing that, from
 * the per-record latent kappa.
 */

import * as tf from "@tensorflow/tfjs";

import { CurveRow, dbStats } from "./curves";
import { Dataset, toChannelArrays } from "./dataset";
import { complexMsePerRecord } from "./model";

/** Anything with a predict method; lets stubs stand in for a model. */
export interface Predictor {
  predict(x: tf.Tensor3D): tf.Tensor | tf.Tensor[];
}

/** Round to whole nanodecibels, matching the curve-file convention. */
function roundDb(x: number): number {
  return Math.round(x * 1e9) / 1e9;
}

export function sirLabel(ds: Dataset): number {
  const mixture = ds.metadata?.mixture as
    | { kappa_levels?: { sir_db?: number; prior?: number }[] }
    | undefined;
  const levels = mixture?.kappa_levels;
  if (levels && levels.length === 1 && typeof levels[0].sir_db === "number") {
    return roundDb(levels[0].sir_db);
  }
  const kappas = new Set(ds.records.map((r) => r.kappa).filter((k) => k !== undefined));
  if (kappas.size === 1) {
    const kappa = kappas.values().next().value as number;
    return roundDb(-20 * Math.log10(kappa));
  }
  throw new Error(
    "cannot label the level: need single-level export metadata or uniform per-record kappa",
  );
}

export function evaluateOnDataset(
  model: Predictor,
  ds: Dataset,
  sirDb: number,
  estimator = "unet",
  batchSize = 64,
): CurveRow {
  const { x, t, shape } = toChannelArrays(ds);
  const count = shape[0];
  const errors = new Float64Array(count);
  for (let start = 0; start < count; start += batchSize) {
    const stop = Math.min(start + batchSize, count);
    const bx = tf.tensor3d(
      x.subarray(start * shape[1] * 2, stop * shape[1] * 2),
      [stop - start, shape[1], 2],
    );
    const bt = tf.tensor3d(
      t.subarray(start * shape[1] * 2, stop * shape[1] * 2),
      [stop - start, shape[1], 2],
    );
    const pred = model.predict(bx) as tf.Tensor3D;
    errors.set(complexMsePerRecord(pred, bt), start);
    tf.dispose([bx, bt, pred]);
  }
  const { mseDb, stderrDb } = dbStats(errors);
  return { estimator, sirDb, mseDb, stderrDb, trials: count };
}

/** One row per dataset, sorted by SIR for a tidy curve file. */
export function evaluateMany(
  model: Predictor,
  labeled: { ds: Dataset; sirDb: number }[],
  estimator = "unet",
): CurveRow[] {
  const rows = labeled.map(({ ds, sirDb }) => evaluateOnDataset(model, ds, sirDb, estimator));
  rows.sort((a, b) => a.sirDb - b.sirDb);
  return rows;
}
