// Dashboard: numbers come from /stats verbatim; the UI only formats them.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ReviewApi } from "../src/api.js";
import { StatsPoller, toView } from "../src/dashboard.js";
import type { DashboardView } from "../src/dashboard.js";
import { createMockService, makeItem } from "./mock_service.js";

describe("stats view", () => {
  it("renders 18.1% on the 155-of-855 fixture", () => {
    const view = toView({
      correction_rate: 18.1,
      count: 155,
      total_audited: 855,
      histogram: { wrong_color: 90, wrong_motion: 65 },
    });
    expect(view.rateText).toBe("18.1%");
    expect(view.count).toBe(155);
    expect(view.totalAudited).toBe(855);
    expect(view.histogram[0]).toEqual({ tag: "wrong_color", count: 90 });
  });

  it("zero audits shows the empty state", () => {
    const view = toView({ correction_rate: null, count: 0, total_audited: 0, histogram: {} });
    expect(view.empty).toBe(true);
    expect(view.rateText).toBe("no audits yet");
  });

  it("dashboard equals a direct /stats fetch in the same run", async () => {
    const svc = createMockService([makeItem("a:caption"), makeItem("b:caption")]);
    const api = new ReviewApi("", svc.fetchImpl);
    await api.postAudit("a:caption", {
      annotator_id: "x",
      decision: "correct",
      corrected_text: "fixed",
    });
    await api.postAudit("b:caption", { annotator_id: "x", decision: "accept" });
    const direct = await api.stats();
    const view = toView(direct);
    expect(view.rateText).toBe(`${direct.correction_rate!.toFixed(1)}%`);
    expect(view.rateText).toBe("50.0%");
    expect(view.count).toBe(direct.count);
  });
});

describe("stats poller", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("polls every 5 seconds and marks failures stale", async () => {
    const svc = createMockService(
      [makeItem("a:caption")],
      { correction_rate: 18.1, count: 155, total_audited: 855, histogram: {} },
    );
    const api = new ReviewApi("", svc.fetchImpl);
    const updates: DashboardView[] = [];
    const poller = new StatsPoller(api, (v) => updates.push(v), 5000);
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(updates).toHaveLength(1);
    expect(updates[0]!.rateText).toBe("18.1%");
    expect(updates[0]!.stale).toBe(false);

    await vi.advanceTimersByTimeAsync(5000);
    expect(updates).toHaveLength(2);

    svc.setOffline(true);
    await vi.advanceTimersByTimeAsync(5000);
    expect(updates).toHaveLength(3);
    expect(updates[2]!.stale).toBe(true);
    expect(updates[2]!.rateText).toBe("18.1%"); // last numbers retained

    poller.stop();
    await vi.advanceTimersByTimeAsync(20000);
    expect(updates).toHaveLength(3);
  });
});
