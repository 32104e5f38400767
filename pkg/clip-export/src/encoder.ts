/**
 * Embedding backends.
 *
 * `HashEncoder` is a deterministic offline stand-in: vectors are derived
 * from SHA-256 of the input content, so identical inputs always produce
 * identical rows, on any platform, with no model weights. It preserves the
 * file contract (width, order, determinism) but carries no visual or
 * lexical semantics.
 *
 * `HttpEncoder` talks to a user-supplied encoding service over JSON and is
 * the path to real CLIP features:
 *
 *     POST {base}/embed/text   {"model": "...", "texts": ["..."]}
 *     POST {base}/embed/image  {"model": "...", "images": [{"name": "...", "data_b64": "..."}]}
 *
 * both answering {"vectors": [[...], ...]} with one vector per input, in
 * input order.
 */

import { createHash } from "node:crypto";

import { MODEL_WIDTHS } from "./exportspec.js";

/** One image handed to an encoder: raw bytes plus a name for diagnostics. */
export interface ImageInput {
  name: string;
  bytes: Buffer;
}

export interface Encoder {
  readonly model: string;
  /** Embedding width when known up front; null when the service decides. */
  readonly dim: number | null;
  /** One vector per prompt, in prompt order. */
  encodeText(texts: string[]): Promise<Float32Array[]>;
  /** One vector per image, in input order. */
  encodeImages(images: ImageInput[]): Promise<Float32Array[]>;
}

const STUB_DOMAIN = "clip-export-hash-v1";

/** Deterministic content-hash encoder (no weights, no network). */
export class HashEncoder implements Encoder {
  readonly model: string;
  readonly dim: number;

  constructor(model: string, dim?: number) {
    this.model = model;
    const width = dim ?? MODEL_WIDTHS[model] ?? 512;
    if (!Number.isInteger(width) || width < 2) {
      throw new Error(`embedding width must be an integer >= 2, got ${width}`);
    }
    this.dim = width;
  }

  private vectorFor(kind: "text" | "image", content: Buffer): Float32Array {
    const contentDigest = createHash("sha256").update(content).digest();
    const seed = createHash("sha256")
      .update(STUB_DOMAIN)
      .update(kind)
      .update("\0")
      .update(this.model)
      .update("\0")
      .update(contentDigest)
      .digest();
    const out = new Float32Array(this.dim);
    const counter = Buffer.alloc(4);
    let filled = 0;
    for (let block = 0; filled < this.dim; block++) {
      counter.writeUInt32LE(block, 0);
      const bytes = createHash("sha256").update(seed).update(counter).digest();
      for (let k = 0; k + 4 <= bytes.length && filled < this.dim; k += 4) {
        // u32 -> uniform [-1, 1); float64 math, rounded to f32 on store.
        out[filled++] = (bytes.readUInt32LE(k) / 0x100000000) * 2 - 1;
      }
    }
    return out;
  }

  async encodeText(texts: string[]): Promise<Float32Array[]> {
    return texts.map((t) => this.vectorFor("text", Buffer.from(t, "utf8")));
  }

  async encodeImages(images: ImageInput[]): Promise<Float32Array[]> {
    return images.map((img) => this.vectorFor("image", img.bytes));
  }
}

interface EmbedResponse {
  vectors?: unknown;
}

/** Client for a remote encoding service. */
export class HttpEncoder implements Encoder {
  readonly model: string;
  readonly dim: number | null = null;
  readonly baseUrl: string;
  readonly batchSize: number;

  constructor(baseUrl: string, model: string, batchSize = 64) {
    if (!Number.isInteger(batchSize) || batchSize < 1) {
      throw new Error(`batch size must be an integer >= 1, got ${batchSize}`);
    }
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.model = model;
    this.batchSize = batchSize;
  }

  private async post(path: string, body: unknown, expected: number): Promise<Float32Array[]> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      const text = await response.text();
      throw new Error(
        `encoding service request failed: ${response.status} ${response.statusText}. ${text}`,
      );
    }
    const payload = (await response.json()) as EmbedResponse;
    const vectors = payload.vectors;
    if (!Array.isArray(vectors) || vectors.length !== expected) {
      throw new Error(
        `encoding service returned ${Array.isArray(vectors) ? vectors.length : "no"} ` +
          `vectors for ${expected} inputs`,
      );
    }
    const rows: Float32Array[] = [];
    let width = -1;
    for (const vec of vectors) {
      if (!Array.isArray(vec) || vec.some((v) => typeof v !== "number" || !Number.isFinite(v))) {
        throw new Error("encoding service returned a malformed vector");
      }
      if (width === -1) {
        width = vec.length;
      } else if (vec.length !== width) {
        throw new Error(
          `encoding service returned ragged vectors (${vec.length} vs ${width})`,
        );
      }
      rows.push(Float32Array.from(vec as number[]));
    }
    return rows;
  }

  async encodeText(texts: string[]): Promise<Float32Array[]> {
    const rows: Float32Array[] = [];
    for (let start = 0; start < texts.length; start += this.batchSize) {
      const batch = texts.slice(start, start + this.batchSize);
      rows.push(...(await this.post("/embed/text", { model: this.model, texts: batch }, batch.length)));
    }
    return rows;
  }

  async encodeImages(images: ImageInput[]): Promise<Float32Array[]> {
    const rows: Float32Array[] = [];
    for (let start = 0; start < images.length; start += this.batchSize) {
      const batch = images.slice(start, start + this.batchSize);
      const body = {
        model: this.model,
        images: batch.map((img) => ({
          name: img.name,
          data_b64: img.bytes.toString("base64"),
        })),
      };
      rows.push(...(await this.post("/embed/image", body, batch.length)));
    }
    return rows;
  }
}
