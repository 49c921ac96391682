import { describe, expect, it } from "vitest";

import {
  SafetyError,
  applyEdit,
  chainingHolds,
  gotoRound,
  newSession,
  struckWords,
  toggleMarker,
} from "../src/session.js";
import type { EditResponseBody } from "../src/types.js";

function respond(output: string, introduced: number[]): EditResponseBody {
  return { output, introduced, flagged: false, score: -1.0 };
}

describe("session basics", () => {
  it("starts with all markers zero", () => {
    const s = newSession("the quick fox");
    expect(s.rounds).toHaveLength(1);
    expect(s.rounds[0].markers).toEqual([0, 0, 0]);
  });

  it("toggle is an involution and leaves other markers alone", () => {
    let s = newSession("a b c d");
    s = toggleMarker(s, 0, 1);
    expect(s.rounds[0].markers).toEqual([0, 1, 0, 0]);
    s = toggleMarker(s, 0, 3);
    expect(s.rounds[0].markers).toEqual([0, 1, 0, 1]);
    s = toggleMarker(s, 0, 1);
    s = toggleMarker(s, 0, 3);
    expect(s.rounds[0].markers).toEqual([0, 0, 0, 0]);
  });

  it("ignores toggles on stale rounds with a notice", () => {
    let s = newSession("a b");
    s = toggleMarker(s, 0, 0);
    s = applyEdit(s, respond("c b", [0]));
    const before = s.rounds[0].markers.slice();
    const after = toggleMarker(s, 0, 1);
    expect(after.rounds[0].markers).toEqual(before);
    expect(after.notice).toMatch(/finished/);
  });

  it("ignores out-of-range word indices", () => {
    const s = newSession("a b");
    const after = toggleMarker(s, 0, 9);
    expect(after.rounds[0].markers).toEqual([0, 0]);
    expect(after.notice).toBeDefined();
  });
});

describe("applyEdit", () => {
  it("chains the new round from the output verbatim", () => {
    let s = newSession("a b c");
    s = toggleMarker(s, 0, 0);
    s = applyEdit(s, respond("x b c", [0]));
    expect(s.rounds).toHaveLength(2);
    expect(s.rounds[1].guessWords).toEqual(["x", "b", "c"]);
    expect(s.rounds[1].markers).toEqual([0, 0, 0]);
    expect(chainingHolds(s)).toBe(true);
  });

  it("refuses to display an output containing a struck word", () => {
    let s = newSession("a b c");
    s = toggleMarker(s, 0, 0); // strike "a"
    const before = s;
    expect(() => applyEdit(s, respond("a b c", []))).toThrow(SafetyError);
    expect(s).toEqual(before); // session unchanged
  });

  it("flags an introduced-field mismatch as a warning, not a failure", () => {
    let s = newSession("a b");
    s = applyEdit(s, respond("a z", [0, 1])); // server claims index 0 too
    expect(s.rounds[0].diffWarning).toMatch(/mismatch/);
    expect(s.rounds[0].introduced).toEqual([1]); // client's own computation shown
  });

  it("keeps history append-only across navigation", () => {
    let s = newSession("a b");
    s = applyEdit(s, respond("c b", [0]));
    s = applyEdit(s, respond("d b", [0]));
    const snapshot = JSON.stringify(s.rounds);
    const back = gotoRound(s, 0);
    expect(back.activeRound).toBe(0);
    expect(JSON.stringify(back.rounds)).toBe(snapshot);
    const forward = gotoRound(back, 2);
    expect(forward.activeRound).toBe(2);
  });
});

describe("scripted three-round session", () => {
  it("never displays a struck word and keeps the chaining invariant", () => {
    const script: Array<{ strike: number[]; output: string; introduced: number[] }> = [
      { strike: [1], output: "w1 w9 w3 w4", introduced: [1] },
      { strike: [3], output: "w1 w9 w3 w7", introduced: [3] },
      { strike: [0, 2], output: "w8 w9 w6 w7", introduced: [0, 2] },
    ];
    let s = newSession("w1 w2 w3 w4");
    const struckEver: string[][] = [];
    for (const step of script) {
      for (const i of step.strike) {
        s = toggleMarker(s, s.rounds.length - 1, i);
      }
      struckEver.push([...struckWords(s.rounds[s.rounds.length - 1])]);
      s = applyEdit(s, respond(step.output, step.introduced));
    }
    expect(s.rounds).toHaveLength(4);
    expect(chainingHolds(s)).toBe(true);
    // each round's displayed output avoids the words struck in that round
    s.rounds.forEach((round, r) => {
      if (!round.outputWords) {
        return;
      }
      for (const struck of struckEver[r]) {
        expect(round.outputWords).not.toContain(struck);
      }
      expect(round.diffWarning).toBeUndefined();
    });
  });
});
