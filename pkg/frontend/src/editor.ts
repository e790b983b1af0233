// Correction editor logic: mirrors the service's 422 invariants so invalid
// submissions are blocked before they ever reach the wire.

import type { AuditSubmission } from "./types.js";

export interface EditorState {
  original: string;
  edited: string;
  errorTags: string[];
}

/** Submission stays disabled until the text actually differs. */
export function canSubmit(state: EditorState): boolean {
  return validate(state).length === 0;
}

/** Field-level problems, named like the service's validation errors. */
export function validate(state: EditorState): string[] {
  const problems: string[] = [];
  const edited = state.edited.trim();
  if (!edited) {
    problems.push("corrected_text: must be non-empty");
  } else if (edited === state.original.trim()) {
    problems.push("corrected_text: must differ from the original");
  }
  return problems;
}

export function buildCorrectionBody(
  annotatorId: string,
  state: EditorState,
): AuditSubmission {
  const problems = validate(state);
  if (problems.length > 0) {
    throw new Error(problems.join("; "));
  }
  return {
    annotator_id: annotatorId,
    decision: "correct",
    corrected_text: state.edited.trim(),
    error_tags: [...state.errorTags],
  };
}
