/**
 * The two export operations: prompted nouns and images, both ending in a
 * normalized LAICFTR1 file. Features are L2-normalized here, before
 * writing, so downstream consumers never re-normalize real data.
 */

import { Encoder, ImageInput } from "./encoder.js";
import { ExportSpec } from "./exportspec.js";
import { l2NormalizeRows, writeFeatureFile, UNKNOWN_LABEL } from "./featurefile.js";
import { enumerateImageSource, SourceImage } from "./images.js";
import { readNounList } from "./nouns.js";
import { assemblePrompt } from "./prompt.js";

export type LogFn = (message: string) => void;

/** Pack per-row vectors into one row-major float32 matrix, validating shape. */
function packRows(vectors: Float32Array[], expected: number): {
  data: Float32Array;
  rows: number;
  dim: number;
} {
  if (vectors.length !== expected) {
    throw new Error(`encoder returned ${vectors.length} vectors for ${expected} inputs`);
  }
  const dim = vectors[0]?.length ?? 0;
  if (dim < 2) {
    throw new Error(`encoder width must be >= 2, got ${dim}`);
  }
  const data = new Float32Array(expected * dim);
  for (let r = 0; r < expected; r++) {
    const vec = vectors[r]!;
    if (vec.length !== dim) {
      throw new Error(`encoder returned ragged vectors (row ${r}: ${vec.length} vs ${dim})`);
    }
    for (let j = 0; j < dim; j++) {
      const v = vec[j]!;
      if (!Number.isFinite(v)) {
        throw new Error(`encoder returned a non-finite value at row ${r}`);
      }
      data[r * dim + j] = v;
    }
  }
  return { data, rows: expected, dim };
}

export interface NounExportResult {
  rows: number;
  dim: number;
  outPath: string;
  /** Assembled prompts, in noun-list order (row order of the file). */
  prompts: string[];
}

/**
 * Encode every noun (substituted into the prompt template) and write the
 * normalized vectors in list order. Row count equals noun count.
 */
export async function exportNounFeatures(
  spec: ExportSpec,
  encoder: Encoder,
): Promise<NounExportResult> {
  if (!spec.nounFile) {
    throw new Error("noun list file is required for text export");
  }
  if (!spec.nounOut) {
    throw new Error("noun output path is required for text export");
  }
  const nouns = await readNounList(spec.nounFile);
  const prompts = nouns.map((noun) => assemblePrompt(noun, spec.template));
  const { data, rows, dim } = packRows(await encoder.encodeText(prompts), prompts.length);
  l2NormalizeRows(data, rows, dim);
  await writeFeatureFile(spec.nounOut, data, rows, dim, null);
  return { rows, dim, outPath: spec.nounOut, prompts };
}

export interface ImageExportResult {
  rows: number;
  dim: number;
  outPath: string;
  /** Whether a label block was written. */
  labeled: boolean;
  /** Class names aligned with label values, when the source names them. */
  classNames: string[] | null;
  /** Output row -> source enumeration entry. */
  indexMap: { row: number; index: number; name: string; label: number | null }[];
  /** Enumerated entries that could not be read and were left out. */
  skipped: { index: number; name: string; reason: string }[];
}

/**
 * Encode every readable image from the source and write the normalized
 * vectors in enumeration order, with a label block when the source is
 * labeled. Unreadable entries are skipped with a warning and recorded in
 * the returned index map.
 */
export async function exportImageFeatures(
  spec: ExportSpec,
  encoder: Encoder,
  log: LogFn = (msg) => console.warn(msg),
): Promise<ImageExportResult> {
  if (!spec.imageSource) {
    throw new Error("image source is required for image export");
  }
  if (!spec.imageOut) {
    throw new Error("image output path is required for image export");
  }
  const { images, classNames } = await enumerateImageSource(spec.imageSource);

  const kept: { entry: SourceImage; input: ImageInput }[] = [];
  const skipped: ImageExportResult["skipped"] = [];
  for (const entry of images) {
    try {
      const bytes = await entry.load();
      kept.push({ entry, input: { name: entry.name, bytes } });
    } catch (err) {
      const reason = (err as Error).message;
      log(`skipping unreadable image ${entry.name}: ${reason}`);
      skipped.push({ index: entry.index, name: entry.name, reason });
    }
  }
  if (kept.length === 0) {
    throw new Error(`no readable images in source ${spec.imageSource}`);
  }

  const { data, rows, dim } = packRows(
    await encoder.encodeImages(kept.map((k) => k.input)),
    kept.length,
  );
  l2NormalizeRows(data, rows, dim);

  const labeled = kept.some((k) => k.entry.label !== null);
  let labels: Int32Array | null = null;
  if (labeled) {
    labels = new Int32Array(rows);
    for (let r = 0; r < rows; r++) {
      labels[r] = kept[r]!.entry.label ?? UNKNOWN_LABEL;
    }
  }
  await writeFeatureFile(spec.imageOut, data, rows, dim, labels);

  const indexMap = kept.map((k, row) => ({
    row,
    index: k.entry.index,
    name: k.entry.name,
    label: k.entry.label,
  }));
  return { rows, dim, outPath: spec.imageOut, labeled, classNames, indexMap, skipped };
}
