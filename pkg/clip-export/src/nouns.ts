/** Noun list input: UTF-8 text, one noun per line. */

import { promises as fs } from "node:fs";

/**
 * Read a noun list file. Lines are trimmed; blank lines are dropped;
 * duplicates and internal spaces ("oak tree") are kept as written.
 * Throws when the file yields no nouns.
 */
export async function readNounList(path: string): Promise<string[]> {
  let text: string;
  try {
    text = await fs.readFile(path, "utf8");
  } catch (err) {
    throw new Error(`cannot read noun list ${path}: ${(err as Error).message}`);
  }
  const nouns = text
    .split(/\r?\n/)
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  if (nouns.length === 0) {
    throw new Error(`noun list ${path} is empty`);
  }
  return nouns;
}
