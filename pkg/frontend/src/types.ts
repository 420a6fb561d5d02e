/** Wire types mirroring the triage service JSON, field for field. */

export interface QueueItem {
  event_id: string;
  label_id: string;
  certainty: number;
  flagged: boolean;
  flag_reason: "uncertain" | "problem_group" | null;
  neighbors: [string, number][];
  model_version: string;
  replay_id?: string;
  error_message?: string | null;
  statement_string?: string | null;
  summary_text?: string | null;
  operator_label_id: string | null;
  effective_label_id: string;
  history: OperatorActionRecord[];
}

export interface OperatorActionRecord {
  kind: "reclassify" | "confirm";
  operator_id: string;
  timestamp: string;
  event_id?: string;
  new_label_id?: string;
}

export interface QueuePage {
  items: QueueItem[];
  total: number;
  offset: number;
  limit: number;
}

export interface Label {
  label_id: string;
  display_name: string;
}

export interface NeighborExplanation {
  item_id: string;
  label_id: string;
  distance: number;
  categorical_part: number;
  textual_part: number;
  text: string;
}

export interface Explanation {
  event_id: string;
  label_id: string;
  certainty: number;
  distance_margin: number;
  neighbors: NeighborExplanation[];
}

/** Context items use the summarizer prompt's key spelling. */
export interface ContextItem {
  "Statement String": string;
  "Error Code"?: string;
  "Error Message"?: string;
  "Skip Reason"?: string;
}

export interface ContextResponse {
  target_event_id: string;
  items: ContextItem[];
  truncated: boolean;
}

export interface SummaryGroup {
  statement_type: string;
  status: string;
  error: string;
  objects: string[];
}

export interface SummaryResponse {
  groups: SummaryGroup[];
  provenance: string;
  raw_response: string;
  warnings: string[];
}

export interface FoldMetrics {
  f1_macro: number;
  f1_comb: number;
  accuracy: number;
  certainty: number;
  n_test: number;
}

export interface CvReport {
  feature_mode: string;
  vectorizer_kind: string;
  hyperparameters: Record<string, unknown>;
  seed: number;
  folds: FoldMetrics[];
  mean_f1_macro: number;
  mean_f1_comb: number;
  mean_accuracy: number;
  mean_certainty: number;
  per_class: Record<string, { precision: number; recall: number; f1: number; support: number }>;
  confusion_labels: string[];
  confusion: number[][];
  n_items: number;
}

export interface GateStatus {
  passed: boolean;
  delta: number;
  reasons: string[];
}

export interface ModelListing {
  version: string;
  status: "active" | "staged" | "retired";
  feature_mode: string;
  vectorizer_kind: string;
  n_items: number;
  mean_f1_macro: number | null;
  gate: GateStatus | Record<string, never>;
}

export type WeeklyRatings = Record<string, number>;

export interface QueueFilters {
  replayId?: string;
  flagged?: boolean;
  flagReason?: "uncertain" | "problem_group";
  label?: string;
  offset?: number;
  limit?: number;
}
