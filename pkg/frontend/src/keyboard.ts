// Keyboard-first workflow: auditing is high-volume, so every decision has a key.

export type UiAction =
  | "accept"
  | "open-editor"
  | "reject"
  | "skip"
  | "prev"
  | "close";

export const KEY_BINDINGS: Record<string, UiAction> = {
  a: "accept",
  c: "open-editor",
  r: "reject",
  s: "skip",
  n: "skip",
  p: "prev",
  Escape: "close",
};

export function actionForKey(key: string): UiAction | null {
  return KEY_BINDINGS[key] ?? null;
}
