/**
 * Readers for the core package's binary containers.
 *
 * Dataset files ("CSDS", little-endian): a <4sIIQI header (magic,
 * version, window length n, record count, flags with bit 0 marking
 * latents), then per record the observation y and clean source s as n
 * complex64 values each (interleaved float32 re/im), then, when the
 * latent flag is set, <IId tau_s, tau_b, kappa.  A JSON sidecar at
 * `<path>.json` carries metadata.
 *
 * Covariance files ("CSCV"): a <4sIII header, then the n x n complex128
 * matrix row-major.
 */

import * as fs from "fs";

export interface DatasetRecord {
  /** interleaved re/im float32, length 2n */
  y: Float32Array;
  s: Float32Array;
  tauS?: number;
  tauB?: number;
  kappa?: number;
}

export interface Dataset {
  n: number;
  latents: boolean;
  records: DatasetRecord[];
  metadata: Record<string, unknown> | null;
}

const DATASET_MAGIC = "CSDS";
const DATASET_VERSION = 1;
export const DATASET_HEADER_BYTES = 4 + 4 + 4 + 8 + 4;
const LATENT_BYTES = 4 + 4 + 8;

const COV_MAGIC = "CSCV";
const COV_VERSION = 1;
export const COV_HEADER_BYTES = 4 + 4 + 4 + 4;

export class FormatError extends Error {}

export function readDataset(path: string): Dataset {
  const raw = fs.readFileSync(path);
  if (raw.length < DATASET_HEADER_BYTES) {
    throw new FormatError(`file too short for a dataset header: ${raw.length} bytes`);
  }
  const magic = raw.toString("latin1", 0, 4);
  if (magic !== DATASET_MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}, expected ${DATASET_MAGIC}`);
  }
  const version = raw.readUInt32LE(4);
  if (version !== DATASET_VERSION) {
    throw new FormatError(`unsupported dataset version ${version}`);
  }
  const n = raw.readUInt32LE(8);
  const count = Number(raw.readBigUInt64LE(12));
  const flags = raw.readUInt32LE(20);
  const latents = (flags & 1) !== 0;
  const recBytes = 2 * n * 8 + (latents ? LATENT_BYTES : 0);
  const expected = DATASET_HEADER_BYTES + count * recBytes;
  if (raw.length !== expected) {
    throw new FormatError(
      `dataset of ${count} records with n=${n} should be ${expected} bytes, file has ${raw.length}`,
    );
  }

  const records: DatasetRecord[] = [];
  let off = DATASET_HEADER_BYTES;
  for (let i = 0; i < count; i++) {
    // slice copies so records stay valid independent of the file buffer
    const y = new Float32Array(
      raw.buffer.slice(raw.byteOffset + off, raw.byteOffset + off + n * 8),
    );
    off += n * 8;
    const s = new Float32Array(
      raw.buffer.slice(raw.byteOffset + off, raw.byteOffset + off + n * 8),
    );
    off += n * 8;
    const rec: DatasetRecord = { y, s };
    if (latents) {
      rec.tauS = raw.readUInt32LE(off);
      rec.tauB = raw.readUInt32LE(off + 4);
      rec.kappa = raw.readDoubleLE(off + 8);
      off += LATENT_BYTES;
    }
    records.push(rec);
  }

  let metadata: Record<string, unknown> | null = null;
  const sidecar = path + ".json";
  if (fs.existsSync(sidecar)) {
    metadata = JSON.parse(fs.readFileSync(sidecar, "utf-8"));
  }
  return { n, latents, records, metadata };
}

/**
 * Stack a dataset as channel-last tensors: x[i][t] = [re y, im y] and
 * likewise for the target s.  Returned as plain nested-array-free flat
 * buffers plus the shape, ready for tensor3d.
 */
export function toChannelArrays(ds: Dataset): {
  x: Float32Array;
  t: Float32Array;
  shape: [number, number, number];
} {
  const { n, records } = ds;
  const count = records.length;
  const x = new Float32Array(count * n * 2);
  const t = new Float32Array(count * n * 2);
  for (let i = 0; i < count; i++) {
    const base = i * n * 2;
    // interleaved re/im already matches channel-last [time, 2] layout
    x.set(records[i].y, base);
    t.set(records[i].s, base);
  }
  return { x, t, shape: [count, n, 2] };
}

/** Row-major complex128 matrix as {re, im, n}. */
export function readCovariance(path: string): { re: Float64Array; im: Float64Array; n: number } {
  const raw = fs.readFileSync(path);
  if (raw.length < COV_HEADER_BYTES) {
    throw new FormatError(`file too short for a covariance header: ${raw.length} bytes`);
  }
  const magic = raw.toString("latin1", 0, 4);
  if (magic !== COV_MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}, expected ${COV_MAGIC}`);
  }
  const version = raw.readUInt32LE(4);
  if (version !== COV_VERSION) {
    throw new FormatError(`unsupported covariance version ${version}`);
  }
  const n = raw.readUInt32LE(8);
  const expected = COV_HEADER_BYTES + n * n * 16;
  if (raw.length !== expected) {
    throw new FormatError(
      `covariance of order ${n} should be ${expected} bytes, file has ${raw.length}`,
    );
  }
  const re = new Float64Array(n * n);
  const im = new Float64Array(n * n);
  for (let i = 0; i < n * n; i++) {
    re[i] = raw.readDoubleLE(COV_HEADER_BYTES + i * 16);
    im[i] = raw.readDoubleLE(COV_HEADER_BYTES + i * 16 + 8);
  }
  return { re, im, n };
}

/**
 * Largest lag whose first-row autocovariance magnitude exceeds
 * `threshold` times the zero-lag value.  Drives the first-layer kernel
 * choice: a kernel of 2 * lag + 1 covers the correlation span centered
 * on each sample.
 */
export function effectiveCorrelationLength(
  cov: { re: Float64Array; im: Float64Array; n: number },
  threshold = 0.01,
): number {
  const { re, im, n } = cov;
  const zero = Math.hypot(re[0], im[0]);
  let last = 0;
  for (let lag = 1; lag < n; lag++) {
    if (Math.hypot(re[lag], im[lag]) > threshold * zero) {
      last = lag;
    }
  }
  return last;
}
