/** Prompt assembly: substitute a noun into a template around [CLASS]. */

export const CLASS_PLACEHOLDER = "[CLASS]";
export const DEFAULT_PROMPT_TEMPLATE = "A photo of [CLASS]";

/**
 * Substitute `noun` for every literal occurrence of [CLASS] in `template`.
 *
 *     assemblePrompt("dog")                 -> "A photo of dog"
 *     assemblePrompt("oak tree")            -> "A photo of oak tree"
 *     assemblePrompt("x", "[CLASS]!")       -> "x!"
 *
 * Throws when the template does not contain the placeholder.
 */
export function assemblePrompt(
  noun: string,
  template: string = DEFAULT_PROMPT_TEMPLATE,
): string {
  if (!template.includes(CLASS_PLACEHOLDER)) {
    throw new Error(
      `prompt template must contain the ${CLASS_PLACEHOLDER} placeholder, ` +
        `got ${JSON.stringify(template)}`,
    );
  }
  return template.split(CLASS_PLACEHOLDER).join(noun);
}
