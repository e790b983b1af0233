// Item queue: keyboard-driven navigation with optimistic status updates that
// reconcile against the POST response, falling back to the offline outbox.

import { ApiError, NetworkError, ReviewApi } from "./api.js";
import type { OfflineOutbox } from "./offline.js";
import {
  DECISION_STATUS,
  type AuditSubmission,
  type Decision,
  type ItemView,
} from "./types.js";

export interface DecideExtras {
  corrected_text?: string;
  error_tags?: string[];
}

export type DecideOutcome =
  | { kind: "confirmed"; status: string }
  | { kind: "queued-offline" }
  | { kind: "conflict"; server: ItemView }
  | { kind: "invalid"; detail: unknown };

export interface QueueOptions {
  annotatorId: string;
  filter?: string;
  pageSize?: number;
}

export class AuditQueue {
  items: ItemView[] = [];
  index = 0;
  private nextCursor: string | null = null;
  private exhausted = false;

  constructor(
    private readonly api: ReviewApi,
    private readonly outbox: OfflineOutbox,
    private readonly opts: QueueOptions,
  ) {}

  current(): ItemView | null {
    return this.items[this.index] ?? null;
  }

  /** Fetch the next page under the active status filter. */
  async loadMore(): Promise<number> {
    if (this.exhausted) return 0;
    const page = await this.api.listItems({
      status: this.opts.filter,
      cursor: this.nextCursor ?? undefined,
      limit: this.opts.pageSize ?? 10,
    });
    this.items.push(...page.items);
    this.nextCursor = page.next_cursor;
    this.exhausted = page.next_cursor === null;
    return page.items.length;
  }

  async next(): Promise<ItemView | null> {
    if (this.index + 1 >= this.items.length) {
      await this.loadMore();
    }
    if (this.index + 1 < this.items.length) {
      this.index += 1;
    }
    return this.current();
  }

  prev(): ItemView | null {
    if (this.index > 0) this.index -= 1;
    return this.current();
  }

  /**
   * Record a decision on the current item. The status flips optimistically,
   * then reconciles with the server's answer; offline decisions are queued
   * with an idempotency key and the item is marked pending-sync.
   */
  async decide(decision: Decision, extras: DecideExtras = {}): Promise<DecideOutcome> {
    const item = this.current();
    if (!item) throw new Error("no current item");
    const body: AuditSubmission = {
      annotator_id: this.opts.annotatorId,
      decision,
      ...(extras.corrected_text !== undefined
        ? { corrected_text: extras.corrected_text }
        : {}),
      ...(extras.error_tags !== undefined ? { error_tags: extras.error_tags } : {}),
    };
    const previous = item.status;
    item.status = DECISION_STATUS[decision]; // optimistic
    try {
      const resp = await this.api.postAudit(item.id, body);
      item.status = resp.status; // reconcile with the server's view
      if (decision === "correct") item.corrected_text = extras.corrected_text;
      return { kind: "confirmed", status: resp.status };
    } catch (err) {
      if (err instanceof NetworkError) {
        this.outbox.enqueue(item.id, body);
        item.status = "pending-sync";
        return { kind: "queued-offline" };
      }
      if (err instanceof ApiError && err.status === 409) {
        const server = await this.api.getItem(item.id);
        this.items[this.index] = server; // surface the server copy
        return { kind: "conflict", server };
      }
      item.status = previous; // 422 and friends: roll back, let the caller render
      return { kind: "invalid", detail: err instanceof ApiError ? err.detail : err };
    }
  }
}
