/**
 * Image source enumeration.
 *
 * Two source forms are understood:
 *
 *  - A folder path. When the folder contains subdirectories, each
 *    subdirectory is a class: classes are sorted by name and numbered
 *    0..K-1, files inside each class are sorted by name, and enumeration
 *    is class-major. A folder with no subdirectories is a flat, unlabeled
 *    listing sorted by name.
 *  - "cifar10:train:<dir>" or "cifar10:test:<dir>", reading the CIFAR-10
 *    binary batches (data_batch_1.bin..data_batch_5.bin or test_batch.bin;
 *    each record is 1 label byte followed by 3072 pixel bytes).
 *
 * Enumeration order is deterministic and is the row order of the exported
 * file (minus skipped entries).
 */

import { promises as fs } from "node:fs";
import * as path from "node:path";

/** One enumerated image; `load` rejects when the item is unreadable. */
export interface SourceImage {
  /** Position in the source enumeration, before any skips. */
  index: number;
  /** Path or record identifier, for logs and the index map. */
  name: string;
  /** Class label when the source provides one, else null. */
  label: number | null;
  load(): Promise<Buffer>;
}

export interface ImageSource {
  images: SourceImage[];
  /** Class names aligned with label values, when the source names them. */
  classNames: string[] | null;
}

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"]);

const CIFAR_RECORD_BYTES = 1 + 3072;
const CIFAR_CLASSES = 10;

function hasImageExtension(name: string): boolean {
  return IMAGE_EXTENSIONS.has(path.extname(name).toLowerCase());
}

/** True when the buffer starts with a recognized raster signature. */
export function sniffImageBytes(bytes: Buffer): boolean {
  if (bytes.length >= 8 && bytes.readUInt32BE(0) === 0x89504e47) {
    return true; // PNG
  }
  if (bytes.length >= 3 && bytes[0] === 0xff && bytes[1] === 0xd8 && bytes[2] === 0xff) {
    return true; // JPEG
  }
  if (bytes.length >= 6) {
    const head = bytes.toString("ascii", 0, 6);
    if (head === "GIF87a" || head === "GIF89a") {
      return true;
    }
  }
  if (bytes.length >= 2 && bytes.toString("ascii", 0, 2) === "BM") {
    return true; // BMP
  }
  if (
    bytes.length >= 12 &&
    bytes.toString("ascii", 0, 4) === "RIFF" &&
    bytes.toString("ascii", 8, 12) === "WEBP"
  ) {
    return true;
  }
  return false;
}

function folderImage(filePath: string, index: number, label: number | null): SourceImage {
  return {
    index,
    name: filePath,
    label,
    async load() {
      const bytes = await fs.readFile(filePath);
      if (bytes.length === 0) {
        throw new Error("empty file");
      }
      if (!sniffImageBytes(bytes)) {
        throw new Error("unrecognized image data");
      }
      return bytes;
    },
  };
}

async function listFolder(dir: string): Promise<ImageSource> {
  let entries;
  try {
    entries = await fs.readdir(dir, { withFileTypes: true });
  } catch (err) {
    throw new Error(`cannot read image folder ${dir}: ${(err as Error).message}`);
  }
  const subdirs = entries
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort();
  const images: SourceImage[] = [];

  if (subdirs.length > 0) {
    for (let label = 0; label < subdirs.length; label++) {
      const classDir = path.join(dir, subdirs[label]!);
      const files = (await fs.readdir(classDir, { withFileTypes: true }))
        .filter((e) => e.isFile() && hasImageExtension(e.name))
        .map((e) => e.name)
        .sort();
      for (const file of files) {
        images.push(folderImage(path.join(classDir, file), images.length, label));
      }
    }
    if (images.length === 0) {
      throw new Error(`no image files found under ${dir}`);
    }
    return { images, classNames: subdirs };
  }

  const files = entries
    .filter((e) => e.isFile() && hasImageExtension(e.name))
    .map((e) => e.name)
    .sort();
  if (files.length === 0) {
    throw new Error(`no image files found under ${dir}`);
  }
  for (const file of files) {
    images.push(folderImage(path.join(dir, file), images.length, null));
  }
  return { images, classNames: null };
}

async function listCifar10(split: string, dir: string): Promise<ImageSource> {
  let batchFiles: string[];
  if (split === "train") {
    batchFiles = [1, 2, 3, 4, 5].map((i) => `data_batch_${i}.bin`);
  } else if (split === "test") {
    batchFiles = ["test_batch.bin"];
  } else {
    throw new Error(`cifar10 split must be "train" or "test", got ${JSON.stringify(split)}`);
  }

  const images: SourceImage[] = [];
  for (const file of batchFiles) {
    const batchPath = path.join(dir, file);
    let raw: Buffer;
    try {
      raw = await fs.readFile(batchPath);
    } catch (err) {
      throw new Error(`cannot read CIFAR-10 batch ${batchPath}: ${(err as Error).message}`);
    }
    if (raw.length === 0 || raw.length % CIFAR_RECORD_BYTES !== 0) {
      throw new Error(
        `CIFAR-10 batch ${batchPath} has ${raw.length} bytes, ` +
          `not a positive multiple of ${CIFAR_RECORD_BYTES}`,
      );
    }
    const records = raw.length / CIFAR_RECORD_BYTES;
    for (let r = 0; r < records; r++) {
      const offset = r * CIFAR_RECORD_BYTES;
      const label = raw[offset]!;
      const name = `${batchPath}#${r}`;
      images.push({
        index: images.length,
        name,
        label: label < CIFAR_CLASSES ? label : null,
        async load() {
          if (label >= CIFAR_CLASSES) {
            throw new Error(`label byte ${label} out of range 0-${CIFAR_CLASSES - 1}`);
          }
          return raw.subarray(offset + 1, offset + CIFAR_RECORD_BYTES);
        },
      });
    }
  }

  let classNames: string[] | null = null;
  try {
    const meta = await fs.readFile(path.join(dir, "batches.meta.txt"), "utf8");
    const names = meta
      .split(/\r?\n/)
      .map((line) => line.trim())
      .filter((line) => line.length > 0);
    if (names.length >= CIFAR_CLASSES) {
      classNames = names.slice(0, CIFAR_CLASSES);
    }
  } catch {
    // metadata file is optional
  }
  return { images, classNames };
}

/** Enumerate an image source string (folder path or cifar10 split form). */
export async function enumerateImageSource(source: string): Promise<ImageSource> {
  if (source.startsWith("cifar10:")) {
    const rest = source.slice("cifar10:".length);
    const sep = rest.indexOf(":");
    if (sep <= 0 || sep === rest.length - 1) {
      throw new Error(
        `dataset source must look like "cifar10:train:<dir>" or "cifar10:test:<dir>", ` +
          `got ${JSON.stringify(source)}`,
      );
    }
    return listCifar10(rest.slice(0, sep), rest.slice(sep + 1));
  }
  return listFolder(source);
}
