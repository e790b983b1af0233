// Offline outbox: decisions made while the service is unreachable are queued
// with stable idempotency keys and replayed exactly once on reconnect. The
// server deduplicates by key, so even a crash between POST and dequeue cannot
// double-apply a decision.

import { ApiError, NetworkError } from "./api.js";
import type { AuditSubmission } from "./types.js";

export interface PendingAudit {
  itemId: string;
  body: AuditSubmission;
}

export interface OutboxStorage {
  load(): PendingAudit[];
  save(entries: PendingAudit[]): void;
}

/** localStorage-backed persistence so queued decisions survive reloads. */
export class LocalStorageOutbox implements OutboxStorage {
  constructor(private readonly key = "eventforge:outbox") {}

  load(): PendingAudit[] {
    try {
      const raw = localStorage.getItem(this.key);
      return raw ? (JSON.parse(raw) as PendingAudit[]) : [];
    } catch {
      return [];
    }
  }

  save(entries: PendingAudit[]): void {
    localStorage.setItem(this.key, JSON.stringify(entries));
  }
}

export class MemoryOutbox implements OutboxStorage {
  private entries: PendingAudit[] = [];
  load(): PendingAudit[] {
    return [...this.entries];
  }
  save(entries: PendingAudit[]): void {
    this.entries = [...entries];
  }
}

export interface FlushResult {
  posted: number;
  dropped: number;
  remaining: number;
}

export class OfflineOutbox {
  private queue: PendingAudit[];
  private flushing = false;

  constructor(
    private readonly storage: OutboxStorage,
    private readonly post: (itemId: string, body: AuditSubmission) => Promise<unknown>,
    private readonly keyFn: () => string = defaultKey,
  ) {
    this.queue = storage.load();
  }

  get size(): number {
    return this.queue.length;
  }

  /** Queue a decision; the idempotency key is fixed at enqueue time. */
  enqueue(itemId: string, body: AuditSubmission): PendingAudit {
    const pending: PendingAudit = {
      itemId,
      body: { ...body, idempotency_key: body.idempotency_key ?? this.keyFn() },
    };
    this.queue.push(pending);
    this.storage.save(this.queue);
    return pending;
  }

  /**
   * Replay queued decisions in order. Network failures keep the entry and stop
   * the flush (order preserved); service rejections drop the entry, since the
   * server has authoritatively answered for that key.
   */
  async flush(): Promise<FlushResult> {
    if (this.flushing) {
      return { posted: 0, dropped: 0, remaining: this.queue.length };
    }
    this.flushing = true;
    let posted = 0;
    let dropped = 0;
    try {
      while (this.queue.length > 0) {
        const entry = this.queue[0]!;
        try {
          await this.post(entry.itemId, entry.body);
          posted += 1;
        } catch (err) {
          if (err instanceof NetworkError) {
            break; // still offline; retry later
          }
          if (err instanceof ApiError) {
            dropped += 1; // server rejected (409/422/404): keep the server copy
          } else {
            throw err;
          }
        }
        this.queue.shift();
        this.storage.save(this.queue);
      }
    } finally {
      this.flushing = false;
      this.storage.save(this.queue);
    }
    return { posted, dropped, remaining: this.queue.length };
  }
}

let counter = 0;

function defaultKey(): string {
  counter += 1;
  const rand = Math.random().toString(36).slice(2, 10);
  return `ui-${Date.now()}-${counter}-${rand}`;
}
