#!/usr/bin/env node
/**
 * One-shot export CLI.
 *
 *     clip-export nouns  --nouns nouns.txt --out text.laic [options]
 *     clip-export images --source <folder|cifar10:split:dir> --out images.laic [options]
 *
 * Exit codes: 0 success, 1 usage or spec validation error, 2 export failure.
 */

import { promises as fs, realpathSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { parseArgs } from "node:util";

import { Encoder, HashEncoder, HttpEncoder } from "./encoder.js";
import { ExportSpec, resolveExportSpec } from "./exportspec.js";
import { exportImageFeatures, exportNounFeatures } from "./export.js";

const USAGE = `usage:
  clip-export nouns  --nouns <file> --out <file> [--template T] [common options]
  clip-export images --source <folder|cifar10:train:<dir>|cifar10:test:<dir>> --out <file>
                     [--map <file>] [common options]

common options:
  --model <tag>        encoder checkpoint tag (default ViT-B/32)
  --encoder <name>     "hash" (deterministic offline stub, default) or "http"
  --dim <n>            embedding width override for the hash encoder
  --service-url <url>  base URL of the encoding service (required with --encoder http)
  --batch <n>          HTTP request batch size (default 64)

The images command writes a JSON sidecar (default <out>.map.json) mapping
output rows back to source entries and listing skipped unreadable images.
`;

class UsageError extends Error {}

interface CommonOptions {
  model?: string;
  encoder: string;
  dim?: number;
  serviceUrl?: string;
  batch: number;
}

function specOrUsage(partial: Partial<ExportSpec>): ExportSpec {
  try {
    return resolveExportSpec(partial);
  } catch (err) {
    throw new UsageError((err as Error).message);
  }
}

function parsePositiveInt(value: string | undefined, flag: string): number | undefined {
  if (value === undefined) {
    return undefined;
  }
  const n = Number(value);
  if (!Number.isInteger(n) || n < 1) {
    throw new UsageError(`${flag} must be a positive integer, got ${JSON.stringify(value)}`);
  }
  return n;
}

function buildEncoder(opts: CommonOptions): Encoder {
  const model = opts.model ?? "ViT-B/32";
  if (opts.encoder === "hash") {
    return new HashEncoder(model, opts.dim);
  }
  if (opts.encoder === "http") {
    if (!opts.serviceUrl) {
      throw new UsageError("--service-url is required with --encoder http");
    }
    return new HttpEncoder(opts.serviceUrl, model, opts.batch);
  }
  throw new UsageError(`--encoder must be "hash" or "http", got ${JSON.stringify(opts.encoder)}`);
}

const COMMON_FLAGS = {
  model: { type: "string" },
  encoder: { type: "string" },
  dim: { type: "string" },
  "service-url": { type: "string" },
  batch: { type: "string" },
} as const;

function commonOptions(values: Record<string, string | undefined>): CommonOptions {
  return {
    model: values["model"],
    encoder: values["encoder"] ?? "hash",
    dim: parsePositiveInt(values["dim"], "--dim"),
    serviceUrl: values["service-url"],
    batch: parsePositiveInt(values["batch"], "--batch") ?? 64,
  };
}

async function runNouns(args: string[]): Promise<void> {
  const { values } = parseArgs({
    args,
    options: {
      ...COMMON_FLAGS,
      nouns: { type: "string" },
      out: { type: "string" },
      template: { type: "string" },
    },
    strict: true,
  });
  if (!values.nouns || !values.out) {
    throw new UsageError("nouns export requires --nouns and --out");
  }
  const spec = specOrUsage({
    model: values.model,
    template: values.template,
    nounFile: values.nouns,
    nounOut: values.out,
  });
  const encoder = buildEncoder(commonOptions(values));
  const result = await exportNounFeatures(spec, encoder);
  console.log(`wrote ${result.rows} x ${result.dim} noun features to ${result.outPath}`);
}

async function runImages(args: string[]): Promise<void> {
  const { values } = parseArgs({
    args,
    options: {
      ...COMMON_FLAGS,
      source: { type: "string" },
      out: { type: "string" },
      map: { type: "string" },
    },
    strict: true,
  });
  if (!values.source || !values.out) {
    throw new UsageError("images export requires --source and --out");
  }
  const spec = specOrUsage({
    model: values.model,
    imageSource: values.source,
    imageOut: values.out,
  });
  const encoder = buildEncoder(commonOptions(values));
  const result = await exportImageFeatures(spec, encoder);
  const mapPath = values.map ?? `${result.outPath}.map.json`;
  const sidecar = {
    source: spec.imageSource,
    out: result.outPath,
    rows: result.rows,
    dim: result.dim,
    labeled: result.labeled,
    classNames: result.classNames,
    indexMap: result.indexMap,
    skipped: result.skipped,
  };
  await fs.writeFile(mapPath, JSON.stringify(sidecar, null, 2) + "\n");
  const labelNote = result.labeled ? "with labels" : "unlabeled";
  console.log(
    `wrote ${result.rows} x ${result.dim} image features (${labelNote}) to ${result.outPath}` +
      (result.skipped.length > 0 ? `, skipped ${result.skipped.length}` : ""),
  );
  console.log(`index map: ${mapPath}`);
}

/** Entry point; returns the process exit code. */
export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === "nouns") {
      await runNouns(rest);
    } else if (command === "images") {
      await runImages(rest);
    } else if (command === undefined || command === "--help" || command === "-h") {
      process.stdout.write(USAGE);
      return command === undefined ? 1 : 0;
    } else {
      throw new UsageError(`unknown command ${JSON.stringify(command)}`);
    }
    return 0;
  } catch (err) {
    // parseArgs rejections and our own flag checks are usage errors (1);
    // anything raised while exporting is an operational failure (2).
    const isUsage =
      err instanceof UsageError ||
      (err as NodeJS.ErrnoException).code?.startsWith?.("ERR_PARSE_ARGS") === true;
    console.error(`clip-export: ${(err as Error).message}`);
    if (isUsage) {
      process.stderr.write(USAGE);
      return 1;
    }
    return 2;
  }
}

const isDirectRun = (() => {
  if (!process.argv[1]) {
    return false;
  }
  try {
    return fileURLToPath(import.meta.url) === realpathSync(process.argv[1]);
  } catch {
    return false;
  }
})();

if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
