/**
 * Cross-package contract: files written here must pass the Python package's
 * read_laic validation and its unit-norm expectation (row norms within 1e-4
 * of 1.0), and files written by the Python package must decode here. The
 * Python side is reached only through its public file format and reader.
 */

import { spawnSync } from "node:child_process";
import { promises as fs } from "node:fs";
import * as path from "node:path";

import { afterEach, describe, expect, it } from "vitest";

import { HashEncoder } from "../src/encoder.js";
import { resolveExportSpec } from "../src/exportspec.js";
import { exportImageFeatures, exportNounFeatures } from "../src/export.js";
import { decodeFeatureFile } from "../src/featurefile.js";
import { cifarBatch, makeTempDir, pngVariant } from "./helpers.js";

function pythonAvailable(): boolean {
  const probe = spawnSync("python3", ["-c", "import laic"], { encoding: "utf8" });
  return probe.status === 0;
}

const hasPython = pythonAvailable();

const READ_SCRIPT = `
import json, sys
import numpy as np
from laic.featurestore import read_laic

matrix, labels = read_laic(sys.argv[1], role=sys.argv[2])
norms = np.linalg.norm(matrix.as_float64(), axis=1)
print(json.dumps({
    "rows": matrix.rows,
    "dim": matrix.dim,
    "worst_norm_err": float(np.abs(norms - 1.0).max()),
    "labels": None if labels is None else labels.labels.tolist(),
}))
`;

function readWithPython(filePath: string, role: "image" | "text") {
  const result = spawnSync("python3", ["-c", READ_SCRIPT, filePath, role], {
    encoding: "utf8",
  });
  if (result.status !== 0) {
    throw new Error(`python reader failed: ${result.stderr}`);
  }
  return JSON.parse(result.stdout) as {
    rows: number;
    dim: number;
    worst_norm_err: number;
    labels: number[] | null;
  };
}

const tempDirs: string[] = [];

async function tempDir(): Promise<string> {
  const dir = await makeTempDir("clip-export-interop-");
  tempDirs.push(dir);
  return dir;
}

afterEach(async () => {
  while (tempDirs.length > 0) {
    await fs.rm(tempDirs.pop()!, { recursive: true, force: true });
  }
});

describe.skipIf(!hasPython)("interop with the Python reader", () => {
  it("noun exports pass read_laic validation and the unit-norm check", async () => {
    const dir = await tempDir();
    const nounFile = path.join(dir, "nouns.txt");
    await fs.writeFile(nounFile, "dog\ncat\noak tree\nheron\n", "utf8");
    const out = path.join(dir, "text.laic");
    const spec = resolveExportSpec({ nounFile, nounOut: out });
    await exportNounFeatures(spec, new HashEncoder(spec.model, 64));

    const seen = readWithPython(out, "text");
    expect(seen.rows).toBe(4);
    expect(seen.dim).toBe(64);
    expect(seen.worst_norm_err).toBeLessThan(1e-4);
    expect(seen.labels).toBeNull();
  });

  it("labeled image exports carry their labels through read_laic", async () => {
    const dir = await tempDir();
    const records = [
      { label: 3, fill: 9 },
      { label: 0, fill: 4 },
      { label: 9, fill: 2 },
    ];
    await fs.writeFile(path.join(dir, "test_batch.bin"), cifarBatch(records));
    const out = path.join(dir, "images.laic");
    await exportImageFeatures(
      resolveExportSpec({ imageSource: `cifar10:test:${dir}`, imageOut: out }),
      new HashEncoder("ViT-B/32", 32),
    );

    const seen = readWithPython(out, "image");
    expect(seen.rows).toBe(3);
    expect(seen.dim).toBe(32);
    expect(seen.worst_norm_err).toBeLessThan(1e-4);
    expect(seen.labels).toEqual([3, 0, 9]);
  });

  it("unlabeled folder exports read back with labels None", async () => {
    const dir = await tempDir();
    await fs.writeFile(path.join(dir, "p1.png"), pngVariant(1));
    await fs.writeFile(path.join(dir, "p2.png"), pngVariant(2));
    const out = path.join(dir, "images.laic");
    await exportImageFeatures(
      resolveExportSpec({ imageSource: dir, imageOut: out }),
      new HashEncoder("ViT-B/32", 16),
    );
    const seen = readWithPython(out, "image");
    expect(seen.rows).toBe(2);
    expect(seen.labels).toBeNull();
  });

  it("decodes files written by the Python writer, floats bitwise", async () => {
    const dir = await tempDir();
    const out = path.join(dir, "py.laic");
    const script = `
import sys
import numpy as np
from laic.featurestore import FeatureMatrix, LabelVector, l2_normalize, write_laic

values = np.array([[0.6, 0.8, 0.0], [-1.0, 2.0, 2.0]], dtype=np.float32)
matrix = l2_normalize(FeatureMatrix(values, role="image"))
labels = LabelVector(np.array([1, -1], dtype=np.int32), num_classes=2)
write_laic(matrix, labels, sys.argv[1])
print(" ".join(repr(float(v)) for v in np.asarray(matrix.data).ravel()))
`;
    const result = spawnSync("python3", ["-c", script, out], { encoding: "utf8" });
    expect(result.status, result.stderr).toBe(0);
    const expected = result.stdout.trim().split(" ").map(Number);

    const file = decodeFeatureFile(await fs.readFile(out));
    expect(file.rows).toBe(2);
    expect(file.dim).toBe(3);
    expect(Array.from(file.data)).toEqual(expected);
    expect(Array.from(file.labels!)).toEqual([1, -1]);
  });
});
