// API contract types, mirroring the prediction service's JSON schema.

export interface PredictRequest {
  density_kg_m3: number;
  fc_ksc: number;
  e_ksc: number;
  initial_creep_microstrain: number;
  days: number;
}

export interface PredictResponse {
  days: number[];
  creep_microstrain: number[];
  summary: {
    final_value: number;
    max: number;
    mean: number;
  };
}

export interface ExplainResponse {
  phi0: number;
  phi: {
    density_kg_m3: number;
    fc_ksc: number;
    e_ksc: number;
  };
  prediction_microstrain: number;
  context_policy: string;
}

export interface ModelInfo {
  config: Record<string, unknown>;
  param_count: number;
  norm_stats: { alpha: number; feat_mean: number[]; feat_std: number[] };
}

export interface ApiError {
  status: number;
  detail: { field: string; message: string }[] | string;
}
