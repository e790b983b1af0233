// Live correction-rate dashboard. All numbers come from GET /stats; the UI
// only formats them (single source of truth stays on the service).

import type { ReviewApi } from "./api.js";
import type { StatsView } from "./types.js";

export interface DashboardView {
  empty: boolean;
  stale: boolean;
  rateText: string;
  count: number;
  totalAudited: number;
  histogram: Array<{ tag: string; count: number }>;
}

export function toView(stats: StatsView | null, stale = false): DashboardView {
  if (!stats || stats.total_audited === 0 || stats.correction_rate === null) {
    return {
      empty: true,
      stale,
      rateText: "no audits yet",
      count: 0,
      totalAudited: 0,
      histogram: [],
    };
  }
  return {
    empty: false,
    stale,
    rateText: `${stats.correction_rate.toFixed(1)}%`,
    count: stats.count,
    totalAudited: stats.total_audited,
    histogram: Object.entries(stats.histogram)
      .map(([tag, count]) => ({ tag, count }))
      .sort((a, b) => b.count - a.count || a.tag.localeCompare(b.tag)),
  };
}

export const POLL_INTERVAL_MS = 5000;

/** Polls /stats every 5 s; a failed poll keeps the last numbers, marked stale. */
export class StatsPoller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private last: StatsView | null = null;

  constructor(
    private readonly api: ReviewApi,
    private readonly onUpdate: (view: DashboardView) => void,
    private readonly intervalMs: number = POLL_INTERVAL_MS,
  ) {}

  async tick(): Promise<void> {
    try {
      this.last = await this.api.stats();
      this.onUpdate(toView(this.last, false));
    } catch {
      this.onUpdate(toView(this.last, true));
    }
  }

  start(): void {
    if (this.timer !== null) return;
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
