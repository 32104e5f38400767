/**
 * LAICFTR1 feature-file codec.
 *
 * Binary format (all integers little-endian):
 *
 *     bytes 0-7   ASCII magic "LAICFTR1"
 *     u32         rows
 *     u32         dim
 *     u8          dtype code (0 = float32)
 *     7 bytes     zero padding
 *     payload     rows * dim float32 values, row-major
 *     (optional)  ASCII "LBL1", u32 rows, rows * int32 labels
 *
 * The optional label block must agree with the matrix row count. Label
 * value -1 means "unknown / negative". Writers are expected to normalize
 * rows to unit Euclidean norm before serializing; the reader does not
 * enforce that, it only validates the framing.
 */

import { promises as fs } from "node:fs";

export const MAGIC = "LAICFTR1";
export const LABEL_MAGIC = "LBL1";
export const DTYPE_F32 = 0;
export const UNKNOWN_LABEL = -1;

const HEADER_SIZE = 24;
const LABEL_HEADER_SIZE = 8;

export interface FeatureFile {
  /** Row-major float32 payload, rows * dim values. */
  data: Float32Array;
  rows: number;
  dim: number;
  /** Per-row integer labels, aligned with the matrix; null when absent. */
  labels: Int32Array | null;
}

function checkShape(rows: number, dim: number): void {
  if (!Number.isInteger(rows) || rows < 1) {
    throw new Error(`row count must be >= 1, got ${rows}`);
  }
  if (!Number.isInteger(dim) || dim < 2) {
    throw new Error(`feature dim must be >= 2, got ${dim}`);
  }
  if (rows > 0xffffffff || dim > 0xffffffff) {
    throw new Error("matrix too large for u32 header fields");
  }
}

/** Serialize a row-major float32 matrix (and optional labels) to bytes. */
export function encodeFeatureFile(
  data: Float32Array,
  rows: number,
  dim: number,
  labels: Int32Array | null = null,
): Buffer {
  checkShape(rows, dim);
  if (data.length !== rows * dim) {
    throw new Error(
      `payload length ${data.length} != rows * dim = ${rows * dim}`,
    );
  }
  for (let i = 0; i < data.length; i++) {
    const v = data[i]!;
    if (!Number.isFinite(v)) {
      throw new Error(`payload contains a non-finite value at index ${i}`);
    }
  }
  if (labels !== null && labels.length !== rows) {
    throw new Error(`label count ${labels.length} != matrix rows ${rows}`);
  }

  const payloadBytes = rows * dim * 4;
  const labelBytes = labels === null ? 0 : LABEL_HEADER_SIZE + rows * 4;
  const buf = Buffer.alloc(HEADER_SIZE + payloadBytes + labelBytes);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(rows, 8);
  buf.writeUInt32LE(dim, 12);
  buf.writeUInt8(DTYPE_F32, 16);
  // bytes 17-23 stay zero (padding)

  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  let offset = HEADER_SIZE;
  for (let i = 0; i < data.length; i++, offset += 4) {
    view.setFloat32(offset, data[i]!, true);
  }
  if (labels !== null) {
    buf.write(LABEL_MAGIC, offset, "ascii");
    buf.writeUInt32LE(rows, offset + 4);
    offset += LABEL_HEADER_SIZE;
    for (let i = 0; i < rows; i++, offset += 4) {
      if (!Number.isInteger(labels[i]!) || labels[i]! < UNKNOWN_LABEL) {
        throw new Error(`label ${labels[i]} at row ${i} is below -1`);
      }
      view.setInt32(offset, labels[i]!, true);
    }
  }
  return buf;
}

/** Parse bytes produced by `encodeFeatureFile`. Floats round-trip bitwise. */
export function decodeFeatureFile(raw: Buffer): FeatureFile {
  if (raw.length < HEADER_SIZE) {
    throw new Error("truncated header");
  }
  const magic = raw.toString("ascii", 0, 8);
  if (magic !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}`);
  }
  const rows = raw.readUInt32LE(8);
  const dim = raw.readUInt32LE(12);
  const dtypeCode = raw.readUInt8(16);
  if (dtypeCode !== DTYPE_F32) {
    throw new Error(`unsupported dtype code ${dtypeCode}`);
  }
  checkShape(rows, dim);

  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  let offset = HEADER_SIZE;
  const count = rows * dim;
  if (raw.length < offset + count * 4) {
    throw new Error("truncated payload");
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++, offset += 4) {
    data[i] = view.getFloat32(offset, true);
  }

  let labels: Int32Array | null = null;
  if (offset < raw.length) {
    if (raw.length < offset + LABEL_HEADER_SIZE) {
      throw new Error("truncated label block");
    }
    const lblMagic = raw.toString("ascii", offset, offset + 4);
    if (lblMagic !== LABEL_MAGIC) {
      throw new Error(`unexpected trailing data (magic ${JSON.stringify(lblMagic)})`);
    }
    const lblRows = raw.readUInt32LE(offset + 4);
    if (lblRows !== rows) {
      throw new Error(`label block rows ${lblRows} != matrix rows ${rows}`);
    }
    offset += LABEL_HEADER_SIZE;
    if (raw.length < offset + rows * 4) {
      throw new Error("truncated label block");
    }
    labels = new Int32Array(rows);
    for (let i = 0; i < rows; i++, offset += 4) {
      labels[i] = view.getInt32(offset, true);
    }
    if (offset !== raw.length) {
      throw new Error("unexpected trailing data after label block");
    }
  }
  return { data, rows, dim, labels };
}

/** Write a feature file to disk. */
export async function writeFeatureFile(
  path: string,
  data: Float32Array,
  rows: number,
  dim: number,
  labels: Int32Array | null = null,
): Promise<void> {
  await fs.writeFile(path, encodeFeatureFile(data, rows, dim, labels));
}

/** Read a feature file from disk. */
export async function readFeatureFile(path: string): Promise<FeatureFile> {
  return decodeFeatureFile(await fs.readFile(path));
}

/**
 * Scale every row of a row-major matrix to unit Euclidean norm, in place.
 * Norms are accumulated in float64; results round to float32 on store.
 * Throws naming the first row whose norm is numerically zero.
 */
export function l2NormalizeRows(
  data: Float32Array,
  rows: number,
  dim: number,
): void {
  if (data.length !== rows * dim) {
    throw new Error(
      `payload length ${data.length} != rows * dim = ${rows * dim}`,
    );
  }
  for (let r = 0; r < rows; r++) {
    let sumSq = 0;
    for (let j = 0; j < dim; j++) {
      const v = data[r * dim + j]!;
      sumSq += v * v;
    }
    const norm = Math.sqrt(sumSq);
    if (norm < 1e-12) {
      throw new Error(`row ${r} has zero norm and cannot be normalized`);
    }
    for (let j = 0; j < dim; j++) {
      data[r * dim + j] = data[r * dim + j]! / norm;
    }
  }
}
