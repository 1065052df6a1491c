// Wire types mirroring the session service's JSON bodies field-for-field.

export interface PriorParams {
  mu: number;
  n_scale: number;
  var_param: number;
  v_scale: number;
}

export interface RehearsalSettings {
  m: number;
  coverage: number;
  sizes: number[];
}

export interface SessionConfig {
  cil_threshold: number;
  tl: number;
  n_min: number;
  n_max: number;
  coverage: number;
  batch: number;
  reg_min_count: number;
  calibration_pairing: string;
  rehearsal: RehearsalSettings;
}

export interface PredictionView {
  at_count: number;
  raw_median: number;
  median: number;
  minimum: number;
  maximum: number;
  tl_percentile: number;
  success_prob: number;
  calibrated: boolean;
  r_squared: number | null;
}

export type DecisionKind =
  | "continue"
  | "stop_target_reached"
  | "stop_futility"
  | "stop_at_max";

export interface DecisionView {
  kind: DecisionKind;
  at_count: number;
  cil: number;
  target_met: boolean | null;
  prediction: PredictionView | null;
}

export interface SessionSnapshot {
  id: string;
  status: "running" | "stopped";
  count: number;
  seed: number;
  prior: PriorParams;
  config: SessionConfig;
  trajectory: [number, number][];
  decision: DecisionView | null;
  last_decision: DecisionView | null;
  prediction: PredictionView | null;
  state_hash: string;
}

export interface ObservationResponse {
  decision: DecisionView;
  session: SessionSnapshot;
}

export interface WhatIfResponse {
  kind: "continue" | "stop_futility";
  tl: number;
  cil_threshold: number;
  at_count: number;
  tl_percentile: number;
  success_prob: number;
  calibrated: boolean;
}

export interface FieldError {
  field: string;
  message: string;
}
