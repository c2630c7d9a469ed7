/** Payload shapes of the attribution serve API. The UI renders these fields
 * verbatim and computes no scores of its own. */

export interface SessionResponse {
  session_id: string;
  text: string | null;
  token_ids: number[];
  offsets: [number, number][];
  region_count: number;
  model_id: string;
}

export interface AttributeResponse {
  bundle_id: string;
}

export interface InfluenceBlock {
  variant: string;
  raw: number[];
  norm: number[];
}

export interface CurveBlock {
  xs: number[];
  ys: number[];
  auc: number;
}

export interface Bundle {
  schema_version: string;
  targets: { prompt: string; generated_ids: number[]; targets: [number, number][] };
  attribution: {
    order: number[];
    step_values: number[];
    gains: number[];
    raw_scores: number[];
    norm_scores: number[];
    region_scores: number[];
  };
  influence: InfluenceBlock;
  influence_alt: InfluenceBlock;
  curves: {
    x_axis_mode: string;
    insertion: CurveBlock;
    deletion: CurveBlock;
    average_highest: number;
  };
  oracle: { model_id: string; query_count: number };
}

export type BundlePoll =
  | { status: "pending" }
  | { status: "error"; error: string }
  | { status: "done"; bundle: Bundle };

export interface WhatIfResponse {
  positions: number[];
  probs: number[];
  text: string | null;
  removed_region_ids: number[];
}

export interface RegionsResponse {
  width: number;
  height: number;
  region_count: number;
  labels: number[];
}
