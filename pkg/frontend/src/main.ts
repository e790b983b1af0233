// DOM wiring for the annotator app: item panel beside the keyframe and slice
// renders, keyboard-driven decisions, correction editor, live dashboard, and
// the offline outbox indicator.

import { ReviewApi } from "./api.js";
import { StatsPoller, type DashboardView } from "./dashboard.js";
import { buildCorrectionBody, canSubmit, validate, type EditorState } from "./editor.js";
import { actionForKey } from "./keyboard.js";
import { LocalStorageOutbox, OfflineOutbox } from "./offline.js";
import { AuditQueue } from "./queue.js";
import type { ItemView } from "./types.js";

const api = new ReviewApi("");
const outbox = new OfflineOutbox(new LocalStorageOutbox(), (id, body) =>
  api.postAudit(id, body),
);

const annotatorId =
  localStorage.getItem("eventforge:annotator") ??
  `ann-${Math.random().toString(36).slice(2, 8)}`;
localStorage.setItem("eventforge:annotator", annotatorId);

const params = new URLSearchParams(location.search);
const queue = new AuditQueue(api, outbox, {
  annotatorId,
  filter: params.get("status") ?? undefined,
  pageSize: 20,
});

function el<T extends HTMLElement = HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function esc(text: string): string {
  const div = document.createElement("div");
  div.textContent = text;
  return div.innerHTML;
}

function badgeHtml(item: ItemView): string {
  return item.provenance_badges
    .map(
      (b) =>
        `<span class="badge src-${b.source.replace(/[+]/g, "-")} conf-${b.confidence}"
               title="${esc(b.rule ?? "")}">${esc(b.source)} · ${esc(b.confidence)}</span>`,
    )
    .join(" ");
}

function renderItem(): void {
  const item = queue.current();
  const panel = el("item-panel");
  if (!item) {
    panel.innerHTML = `<p class="empty">queue empty — nothing to audit</p>`;
    el("images").innerHTML = "";
    return;
  }
  const body =
    item.type === "caption"
      ? `<p class="caption-text">${esc(item.text ?? "")}</p>`
      : `<p class="qa-q">Q: ${esc(item.question ?? "")}</p>
         <p class="qa-a">A: ${esc(item.answer ?? "")}</p>
         <p class="qa-attrs">${esc(JSON.stringify(item.attributes ?? {}))}</p>`;
  panel.innerHTML = `
    <div class="item-head">
      <code>${esc(item.id)}</code>
      <span class="status status-${item.status}">${esc(item.status)}</span>
    </div>
    ${body}
    ${item.corrected_text ? `<p class="corrected">corrected: ${esc(item.corrected_text)}</p>` : ""}
    <div class="badges">${badgeHtml(item)}</div>`;
  const images = el("images");
  const slices = item.images.slices
    .map((src) => `<img class="slice" src="${esc(src)}" alt="event slice">`)
    .join("");
  images.innerHTML = `
    ${item.images.keyframe ? `<img class="keyframe" src="${esc(item.images.keyframe)}" alt="keyframe">` : ""}
    <div class="slices">${slices}</div>`;
  el("position").textContent = `${queue.index + 1} / ${queue.items.length}`;
}

function renderOutbox(): void {
  const node = el("outbox");
  node.textContent = outbox.size > 0 ? `offline queue: ${outbox.size}` : "";
}

function renderDashboard(view: DashboardView): void {
  el("rate").textContent = view.rateText;
  el("rate").classList.toggle("stale", view.stale);
  el("counts").textContent = view.empty
    ? ""
    : `${view.count} corrections / ${view.totalAudited} audited`;
  el("histogram").innerHTML = view.histogram
    .map((h) => `<li>${esc(h.tag)}: ${h.count}</li>`)
    .join("");
}

// --- correction editor -----------------------------------------------------

let editorState: EditorState | null = null;

function openEditor(): void {
  const item = queue.current();
  if (!item) return;
  const original = item.type === "caption" ? (item.text ?? "") : (item.answer ?? "");
  editorState = { original, edited: original, errorTags: [] };
  el<HTMLTextAreaElement>("editor-original").textContent = original;
  el<HTMLTextAreaElement>("editor-text").value = original;
  el("editor-problems").textContent = "";
  document.querySelectorAll<HTMLInputElement>("#editor-tags input").forEach((cb) => {
    cb.checked = false;
  });
  el<HTMLDialogElement>("editor").showModal();
  syncEditor();
}

function syncEditor(): void {
  if (!editorState) return;
  editorState.edited = el<HTMLTextAreaElement>("editor-text").value;
  editorState.errorTags = Array.from(
    document.querySelectorAll<HTMLInputElement>("#editor-tags input:checked"),
  ).map((cb) => cb.value);
  el<HTMLButtonElement>("editor-submit").disabled = !canSubmit(editorState);
  el("editor-problems").textContent = validate(editorState).join("; ");
}

async function submitCorrection(): Promise<void> {
  if (!editorState || !canSubmit(editorState)) return;
  const body = buildCorrectionBody(annotatorId, editorState);
  const outcome = await queue.decide("correct", {
    corrected_text: body.corrected_text ?? "",
    error_tags: body.error_tags,
  });
  if (outcome.kind === "invalid") {
    el("editor-problems").textContent = JSON.stringify(outcome.detail);
    return; // no queue advance on a 422 mirror miss
  }
  el<HTMLDialogElement>("editor").close();
  editorState = null;
  await queue.next();
  renderItem();
  renderOutbox();
}

// --- actions ----------------------------------------------------------------

async function act(action: string): Promise<void> {
  if (el<HTMLDialogElement>("editor").open && action !== "close") return;
  switch (action) {
    case "accept":
    case "reject": {
      const outcome = await queue.decide(action);
      if (outcome.kind !== "invalid") await queue.next();
      break;
    }
    case "open-editor":
      openEditor();
      return;
    case "skip":
      await queue.next();
      break;
    case "prev":
      queue.prev();
      break;
    case "close":
      el<HTMLDialogElement>("editor").close();
      editorState = null;
      return;
  }
  renderItem();
  renderOutbox();
}

async function boot(): Promise<void> {
  await queue.loadMore();
  renderItem();
  renderOutbox();

  document.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLTextAreaElement) return;
    const action = actionForKey(ev.key);
    if (action) void act(action);
  });
  document.querySelectorAll<HTMLButtonElement>("[data-action]").forEach((btn) => {
    btn.addEventListener("click", () => void act(btn.dataset.action ?? ""));
  });
  el("editor-text").addEventListener("input", syncEditor);
  el("editor-tags").addEventListener("change", syncEditor);
  el("editor-submit").addEventListener("click", () => void submitCorrection());

  new StatsPoller(api, renderDashboard).start();

  // replay offline decisions whenever connectivity returns
  window.addEventListener("online", () => {
    void outbox.flush().then(renderOutbox);
  });
  setInterval(() => {
    if (outbox.size > 0) void outbox.flush().then(renderOutbox);
  }, 10_000);
}

void boot();
