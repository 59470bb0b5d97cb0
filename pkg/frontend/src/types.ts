/** Payload shapes mirrored from the annotation service JSON. */

export type Label = 'fake' | 'real';

export interface NeighborDemo {
  text: string;
  label: number;
}

export interface AnnotationTask {
  record_id: string;
  text: string;
  llm_label: number | null;
  probe_self_probability: number | null;
  neighbors: NeighborDemo[];
  flagged_rank: number;
}

export interface SourceMetrics {
  acc: number;
  prec: number;
  rec: number;
  f1: number;
}

export interface CostSnapshot {
  llm_usd: number;
  human_usd: number;
  total_usd: number;
}

export interface RoundMetrics {
  round: number;
  per_source: Record<string, SourceMetrics>;
  macro_f1: number | null;
  cost: CostSnapshot;
  flagged: number;
  human_labeled: number;
  [extra: string]: unknown;
}

export interface RunStatus {
  round: number;
  status: string;
  metrics: RoundMetrics[];
  cost: CostSnapshot;
  stop_reason: string | null;
  labelled: number;
  pool_remaining: number;
  queue_size: number;
}

export interface SubmitResult {
  queue_size: number;
  status: string;
}
