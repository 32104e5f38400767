/** Export job description and its validation. */

import { CLASS_PLACEHOLDER, DEFAULT_PROMPT_TEMPLATE } from "./prompt.js";

export const DEFAULT_MODEL_TAG = "ViT-B/32";

/**
 * Published embedding widths for the common CLIP checkpoints. Used by the
 * offline encoder to pick a realistic width for a model tag; an HTTP
 * backend reports its own width through its responses.
 */
export const MODEL_WIDTHS: Record<string, number> = {
  "ViT-B/32": 512,
  "ViT-B/16": 512,
  "ViT-L/14": 768,
  RN50: 1024,
  RN101: 512,
};

/** What to export and where to put it. */
export interface ExportSpec {
  /** Encoder checkpoint tag, e.g. "ViT-B/32". */
  model: string;
  /**
   * Image source: a folder path, or a named dataset split of the form
   * "cifar10:train:<dir>" / "cifar10:test:<dir>". Required for image export.
   */
  imageSource?: string;
  /** Path to a UTF-8 noun list, one noun per line. Required for text export. */
  nounFile?: string;
  /** Prompt template containing the [CLASS] placeholder. */
  template: string;
  /** Output path for the image feature file. */
  imageOut?: string;
  /** Output path for the noun feature file. */
  nounOut?: string;
}

/** Fill defaults and check the structural invariants of a partial spec. */
export function resolveExportSpec(partial: Partial<ExportSpec>): ExportSpec {
  const spec: ExportSpec = {
    model: partial.model ?? DEFAULT_MODEL_TAG,
    imageSource: partial.imageSource,
    nounFile: partial.nounFile,
    template: partial.template ?? DEFAULT_PROMPT_TEMPLATE,
    imageOut: partial.imageOut,
    nounOut: partial.nounOut,
  };
  if (spec.model.trim() === "") {
    throw new Error("model tag must be non-empty");
  }
  if (!spec.template.includes(CLASS_PLACEHOLDER)) {
    throw new Error(
      `prompt template must contain the ${CLASS_PLACEHOLDER} placeholder, ` +
        `got ${JSON.stringify(spec.template)}`,
    );
  }
  return spec;
}
