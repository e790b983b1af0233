// Mirrors of the review-service payloads (docs/openapi.json is the contract).

export type Decision = "accept" | "correct" | "reject";

export type ItemStatus =
  | "unaudited"
  | "accepted"
  | "corrected"
  | "rejected"
  | "pending-sync";

export interface ProvenanceBadge {
  fact_id: string;
  source: "G_e" | "G_r" | "G_e+r";
  confidence: "high" | "low";
  rule: string | null;
}

export interface ItemImages {
  keyframe: string | null;
  slices: string[];
}

export interface ItemView {
  id: string;
  type: "caption" | "qa";
  keyframe_id: string;
  sequence_id: string;
  generator: string;
  provenance_badges: ProvenanceBadge[];
  images: ItemImages;
  status: ItemStatus;
  text?: string;
  question?: string;
  answer?: string;
  attributes?: Record<string, string>;
  field_class?: string;
  corrected_text?: string | null;
  error_tags?: string[];
}

export interface ItemPage {
  items: ItemView[];
  next_cursor: string | null;
}

/** Exact POST body shape for /items/{id}/audit. */
export interface AuditSubmission {
  annotator_id: string;
  decision: Decision;
  corrected_text?: string | null;
  error_tags?: string[];
  timestamp?: number | null;
  idempotency_key?: string | null;
}

export interface AuditResponse {
  record: Record<string, unknown>;
  status: ItemStatus;
}

export interface StatsView {
  correction_rate: number | null;
  count: number;
  total_audited: number;
  histogram: Record<string, number>;
}

export const DECISION_STATUS: Record<Decision, ItemStatus> = {
  accept: "accepted",
  correct: "corrected",
  reject: "rejected",
};
