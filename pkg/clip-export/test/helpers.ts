import { promises as fs } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";

/** 1x1 transparent PNG. */
export const PNG_1X1 = Buffer.from(
  "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg==",
  "base64",
);

/** 1x1 black GIF. */
export const GIF_1X1 = Buffer.from(
  "R0lGODlhAQABAIAAAAAAAP///yH5BAEAAAAALAAAAAABAAEAAAIBRAA7",
  "base64",
);

/** A distinct, sniffable PNG payload per tag (trailing bytes vary content). */
export function pngVariant(tag: number): Buffer {
  return Buffer.concat([PNG_1X1, Buffer.from([tag & 0xff, (tag >> 8) & 0xff])]);
}

export async function makeTempDir(prefix: string): Promise<string> {
  return fs.mkdtemp(path.join(tmpdir(), prefix));
}

/** Euclidean norm of one row of a row-major matrix, accumulated in float64. */
export function rowNorm(data: Float32Array, dim: number, row: number): number {
  let sumSq = 0;
  for (let j = 0; j < dim; j++) {
    const v = data[row * dim + j]!;
    sumSq += v * v;
  }
  return Math.sqrt(sumSq);
}

/** Build a CIFAR-10 style binary batch from (label, fillByte) pairs. */
export function cifarBatch(records: { label: number; fill: number }[]): Buffer {
  const out = Buffer.alloc(records.length * 3073);
  for (let r = 0; r < records.length; r++) {
    out[r * 3073] = records[r]!.label;
    out.fill(records[r]!.fill, r * 3073 + 1, (r + 1) * 3073);
  }
  return out;
}
