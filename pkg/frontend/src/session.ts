/**
 * Editing session state: an append-only list of rounds.
 *
 * Each round holds the sentence being edited (the guess), the user's strike
 * markers, and, once the service answers, the rewritten output with its
 * introduced-word indices. Round r+1 always starts from round r's output
 * verbatim. The client re-validates every response: an output that contains
 * a word the user struck out is never displayed.
 */

import { introducedIndices, sameIndices, tokenize } from "./diff.js";
import type { EditResponseBody } from "./types.js";

export interface Round {
  source?: string;
  guessWords: string[];
  markers: number[];
  outputWords?: string[];
  introduced?: number[];
  flagged?: boolean;
  diffWarning?: string;
}

export interface EditorSession {
  rounds: Round[];
  activeRound: number;
  notice?: string;
}

export function newSession(sentence: string, source?: string): EditorSession {
  const words = tokenize(sentence);
  return {
    rounds: [{ source, guessWords: words, markers: words.map(() => 0) }],
    activeRound: 0,
  };
}

export function activeRound(session: EditorSession): Round {
  return session.rounds[session.activeRound];
}

function latest(session: EditorSession): number {
  return session.rounds.length - 1;
}

/**
 * Flip one marker on the latest round. Toggles addressed at an older
 * (stale) round are ignored, with a notice.
 */
export function toggleMarker(
  session: EditorSession,
  roundIndex: number,
  wordIndex: number,
): EditorSession {
  if (roundIndex !== latest(session)) {
    return { ...session, notice: "that round is finished; edit the latest one" };
  }
  const round = session.rounds[roundIndex];
  if (wordIndex < 0 || wordIndex >= round.guessWords.length) {
    return { ...session, notice: `no word at position ${wordIndex}` };
  }
  const markers = round.markers.slice();
  markers[wordIndex] = markers[wordIndex] === 1 ? 0 : 1;
  const rounds = session.rounds.slice();
  rounds[roundIndex] = { ...round, markers };
  return { rounds, activeRound: session.activeRound };
}

export function struckWords(round: Round): Set<string> {
  const struck = new Set<string>();
  round.guessWords.forEach((w, i) => {
    if (round.markers[i] === 1) {
      struck.add(w);
    }
  });
  return struck;
}

export class SafetyError extends Error {}

/**
 * Record the service's rewrite and open the next round from it.
 *
 * Throws SafetyError (leaving the session unchanged) if the output contains
 * a struck word: such an output must never be displayed. A mismatch between
 * the server's `introduced` field and the client's own computation is not
 * fatal but is surfaced as a warning on the round.
 */
export function applyEdit(
  session: EditorSession,
  response: EditResponseBody,
): EditorSession {
  const index = latest(session);
  const round = session.rounds[index];
  const outputWords = tokenize(response.output);

  const banned = struckWords(round);
  const violations = outputWords.filter((w) => banned.has(w));
  if (violations.length > 0) {
    throw new SafetyError(
      `service returned struck words: ${[...new Set(violations)].join(", ")}`,
    );
  }

  const local = introducedIndices(round.guessWords, outputWords);
  let diffWarning: string | undefined;
  if (!sameIndices(local, response.introduced)) {
    diffWarning =
      `introduced-word mismatch: server says [${response.introduced}], ` +
      `client computed [${local}]`;
  }

  const rounds = session.rounds.slice();
  rounds[index] = {
    ...round,
    outputWords,
    introduced: local,
    flagged: response.flagged,
    diffWarning,
  };
  // the next round edits the rewrite verbatim
  rounds.push({
    source: round.source,
    guessWords: outputWords.slice(),
    markers: outputWords.map(() => 0),
  });
  return { rounds, activeRound: rounds.length - 1 };
}

/** Move the view to an earlier or later round without changing history. */
export function gotoRound(session: EditorSession, index: number): EditorSession {
  if (index < 0 || index >= session.rounds.length) {
    return { ...session, notice: `no round ${index}` };
  }
  return { rounds: session.rounds, activeRound: index };
}

/** The chaining invariant: every round's guess is the previous output. */
export function chainingHolds(session: EditorSession): boolean {
  for (let r = 1; r < session.rounds.length; r++) {
    const prev = session.rounds[r - 1].outputWords;
    const next = session.rounds[r].guessWords;
    if (!prev || prev.length !== next.length) {
      return false;
    }
    if (!prev.every((w, i) => w === next[i])) {
      return false;
    }
  }
  return true;
}
