// Correction-editor validation mirrors the service's 422 rules client-side.

import { describe, expect, it } from "vitest";

import { buildCorrectionBody, canSubmit, validate } from "../src/editor.js";

const original = "A white car moves forward.";

describe("correction editor", () => {
  it("unchanged text keeps submit disabled", () => {
    const state = { original, edited: original, errorTags: [] };
    expect(canSubmit(state)).toBe(false);
    expect(validate(state)[0]).toContain("must differ");
  });

  it("whitespace-only edits do not count as changes", () => {
    const state = { original, edited: `  ${original}  `, errorTags: [] };
    expect(canSubmit(state)).toBe(false);
  });

  it("empty text is invalid", () => {
    const state = { original, edited: "   ", errorTags: ["wrong_color"] };
    expect(validate(state)[0]).toContain("non-empty");
  });

  it("edited text plus a tag builds a valid POST body", () => {
    const state = {
      original,
      edited: "A silver car moves forward.",
      errorTags: ["wrong_color"],
    };
    expect(canSubmit(state)).toBe(true);
    expect(buildCorrectionBody("ann-1", state)).toEqual({
      annotator_id: "ann-1",
      decision: "correct",
      corrected_text: "A silver car moves forward.",
      error_tags: ["wrong_color"],
    });
  });

  it("building from an invalid state throws", () => {
    expect(() =>
      buildCorrectionBody("ann-1", { original, edited: original, errorTags: [] }),
    ).toThrow(/differ/);
  });
});
