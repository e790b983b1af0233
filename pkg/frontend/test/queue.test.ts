// Queue navigation: optimistic updates reconciled against the POST response,
// conflict handling, and offline capture with exactly-once replay.

import { describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { MemoryOutbox, OfflineOutbox } from "../src/offline.js";
import { AuditQueue } from "../src/queue.js";
import { createMockService, makeItem } from "./mock_service.js";

function setup(n = 5, filter?: string) {
  const svc = createMockService(
    Array.from({ length: n }, (_, i) => makeItem(`kf-${String(i).padStart(3, "0")}:caption`)),
  );
  const api = new ReviewApi("", svc.fetchImpl);
  const outbox = new OfflineOutbox(new MemoryOutbox(), (id, body) =>
    api.postAudit(id, body),
  );
  const queue = new AuditQueue(api, outbox, {
    annotatorId: "ann-1",
    filter,
    pageSize: 3,
  });
  return { svc, api, outbox, queue };
}

describe("item queue", () => {
  it("accept decision posts the contract body and the queue advances", async () => {
    const { svc, queue } = setup();
    await queue.loadMore();
    const first = queue.current()!;
    const outcome = await queue.decide("accept");
    expect(outcome).toEqual({ kind: "confirmed", status: "accepted" });
    expect(svc.posts[0]!.body).toEqual({ annotator_id: "ann-1", decision: "accept" });
    expect(first.status).toBe("accepted"); // reconciled with the server answer
    await queue.next();
    expect(queue.current()!.id).not.toBe(first.id);
  });

  it("filter=unaudited only fetches unaudited ids", async () => {
    const { svc, api } = setup(4);
    await api.postAudit("kf-001:caption", { annotator_id: "x", decision: "accept" });
    const { queue } = (() => {
      const outbox = new OfflineOutbox(new MemoryOutbox(), (id, body) =>
        api.postAudit(id, body),
      );
      return {
        queue: new AuditQueue(api, outbox, {
          annotatorId: "ann-1",
          filter: "unaudited",
          pageSize: 10,
        }),
      };
    })();
    await queue.loadMore();
    expect(queue.items.map((i) => i.id)).toEqual([
      "kf-000:caption",
      "kf-002:caption",
      "kf-003:caption",
    ]);
    expect(svc.items.get("kf-001:caption")!.status).toBe("accepted");
  });

  it("pagination keeps loading through next()", async () => {
    const { queue } = setup(7);
    await queue.loadMore();
    expect(queue.items).toHaveLength(3);
    for (let i = 0; i < 6; i += 1) await queue.next();
    expect(queue.items).toHaveLength(7);
    expect(queue.index).toBe(6);
    // exhausted queue stays on the last item
    await queue.next();
    expect(queue.index).toBe(6);
  });

  it("offline decision queues locally and replays exactly one POST", async () => {
    const { svc, outbox, queue } = setup();
    await queue.loadMore();
    svc.setOffline(true);
    const outcome = await queue.decide("reject", { error_tags: ["wrong_motion"] });
    expect(outcome).toEqual({ kind: "queued-offline" });
    expect(queue.current()!.status).toBe("pending-sync");
    expect(outbox.size).toBe(1);
    expect(svc.posts).toHaveLength(0);

    svc.setOffline(false);
    const result = await outbox.flush();
    expect(result).toEqual({ posted: 1, dropped: 0, remaining: 0 });
    expect(svc.posts).toHaveLength(1);
    expect(svc.posts[0]!.body).toMatchObject({
      annotator_id: "ann-1",
      decision: "reject",
      error_tags: ["wrong_motion"],
    });
    expect(typeof svc.posts[0]!.body.idempotency_key).toBe("string");

    // a second reconnect replays nothing
    await outbox.flush();
    expect(svc.posts).toHaveLength(1);
  });

  it("409 conflict surfaces the server copy without advancing", async () => {
    const { svc, queue } = setup();
    await queue.loadMore();
    const id = queue.current()!.id;
    svc.items.get(id)!.status = "rejected"; // someone else audited it
    svc.failNextPostWith(409, "idempotency conflict");
    const outcome = await queue.decide("accept");
    expect(outcome.kind).toBe("conflict");
    if (outcome.kind === "conflict") {
      expect(outcome.server.status).toBe("rejected");
    }
    expect(queue.current()!.status).toBe("rejected"); // server copy in place
  });

  it("422 rolls the optimistic status back and reports field errors", async () => {
    const { queue } = setup();
    await queue.loadMore();
    const before = queue.current()!.status;
    const outcome = await queue.decide("correct"); // no corrected_text
    expect(outcome.kind).toBe("invalid");
    expect(queue.current()!.status).toBe(before);
  });

  it("prev walks back without refetching", async () => {
    const { queue } = setup();
    await queue.loadMore();
    const first = queue.current()!.id;
    await queue.next();
    expect(queue.prev()!.id).toBe(first);
  });
});
