export {
  MAGIC,
  LABEL_MAGIC,
  DTYPE_F32,
  UNKNOWN_LABEL,
  encodeFeatureFile,
  decodeFeatureFile,
  writeFeatureFile,
  readFeatureFile,
  l2NormalizeRows,
} from "./featurefile.js";
export type { FeatureFile } from "./featurefile.js";
export { CLASS_PLACEHOLDER, DEFAULT_PROMPT_TEMPLATE, assemblePrompt } from "./prompt.js";
export { DEFAULT_MODEL_TAG, MODEL_WIDTHS, resolveExportSpec } from "./exportspec.js";
export type { ExportSpec } from "./exportspec.js";
export { HashEncoder, HttpEncoder } from "./encoder.js";
export type { Encoder, ImageInput } from "./encoder.js";
export { enumerateImageSource, sniffImageBytes } from "./images.js";
export type { ImageSource, SourceImage } from "./images.js";
export { readNounList } from "./nouns.js";
export { exportNounFeatures, exportImageFeatures } from "./export.js";
export type { NounExportResult, ImageExportResult, LogFn } from "./export.js";
export { main } from "./cli.js";
