/**
 * Word-level introduced-word detection.
 *
 * Must stay in lockstep with the server: the same whitespace tokenization
 * and the same type-level membership rule, so the client can re-derive the
 * server's `introduced` field and flag any divergence.
 */

/** Split on whitespace runs, dropping empties (mirrors Python str.split()). */
export function tokenize(text: string): string[] {
  return text.split(/\s+/).filter((w) => w.length > 0);
}

/**
 * Indices of output words whose type never occurs among the guess words.
 */
export function introducedIndices(
  guessWords: readonly string[],
  outputWords: readonly string[],
): number[] {
  const guessTypes = new Set(guessWords);
  const introduced: number[] = [];
  outputWords.forEach((word, i) => {
    if (!guessTypes.has(word)) {
      introduced.push(i);
    }
  });
  return introduced;
}

/** True when two index lists are identical. */
export function sameIndices(a: readonly number[], b: readonly number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}
