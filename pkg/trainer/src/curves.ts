/**
 * Curve rows in the core benchmark's CSV schema, so trained-network
 * results overlay directly on the estimator curves.
 */

export const CSV_HEADER = "estimator,sir_db,mse_db,stderr_db,trials";

export interface CurveRow {
  estimator: string;
  sirDb: number;
  mseDb: number;
  stderrDb: number;
  trials: number;
}

export function formatCurveCsv(rows: CurveRow[]): string {
  const lines = [CSV_HEADER];
  for (const r of rows) {
    lines.push(`${r.estimator},${r.sirDb},${r.mseDb},${r.stderrDb},${r.trials}`);
  }
  return lines.join("\n") + "\n";
}

export function parseCurveCsv(text: string): CurveRow[] {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (lines.length === 0 || lines[0] !== CSV_HEADER) {
    throw new Error(
      `not a curve file: expected header ${JSON.stringify(CSV_HEADER)}, got ${JSON.stringify(lines[0] ?? "empty")}`,
    );
  }
  return lines.slice(1).map((line) => {
    const parts = line.split(",");
    if (parts.length !== 5) {
      throw new Error(`curve row has ${parts.length} fields, expected 5: ${line}`);
    }
    const row: CurveRow = {
      estimator: parts[0],
      sirDb: Number(parts[1]),
      mseDb: Number(parts[2]),
      stderrDb: Number(parts[3]),
      trials: Number(parts[4]),
    };
    if (!Number.isFinite(row.sirDb) || !Number.isFinite(row.mseDb)) {
      throw new Error(`non-numeric curve row: ${line}`);
    }
    return row;
  });
}

/** Reported MSE never goes below this floor in dB. */
export const MSE_DB_FLOOR = -100;

/**
 * Linear per-record errors to a (mse_db, stderr_db) pair, matching the
 * core's convention: dB of the linear mean, delta-method standard
 * error, floor at -100 dB, stderr 0 when only one record.
 */
export function dbStats(errors: Float64Array): { mseDb: number; stderrDb: number } {
  const m = errors.length;
  let mean = 0;
  for (const e of errors) mean += e;
  mean /= m;
  if (mean <= Math.pow(10, MSE_DB_FLOOR / 10)) {
    return { mseDb: MSE_DB_FLOOR, stderrDb: 0 };
  }
  let varSum = 0;
  for (const e of errors) varSum += (e - mean) * (e - mean);
  const stderrDb =
    m > 1 ? ((10 / Math.LN10) * Math.sqrt(varSum / (m - 1))) / Math.sqrt(m) / mean : 0;
  return { mseDb: Math.max(10 * Math.log10(mean), MSE_DB_FLOOR), stderrDb };
}
