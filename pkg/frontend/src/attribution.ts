// Attribution panel data: signed bars per feature plus the additive
// consistency readout (base value + contributions vs. the prediction).

import type { ExplainResponse } from './types.js';

export interface AttributionBar {
  feature: string;
  label: string;
  phi: number;
  /** share of the largest |phi|, in [0, 1]; drives the bar width */
  magnitude: number;
}

export const FEATURE_LABELS: [keyof ExplainResponse['phi'], string][] = [
  ['density_kg_m3', 'density (kg/m³)'],
  ['fc_ksc', 'f_c (ksc)'],
  ['e_ksc', 'E (ksc)'],
];

export function attributionBars(response: ExplainResponse): AttributionBar[] {
  const largest = Math.max(
    ...FEATURE_LABELS.map(([key]) => Math.abs(response.phi[key])),
    1e-12,
  );
  return FEATURE_LABELS.map(([key, label]) => ({
    feature: key,
    label,
    phi: response.phi[key],
    magnitude: Math.abs(response.phi[key]) / largest,
  }));
}

export interface EfficiencyReadout {
  phi0: number;
  phiSum: number;
  reconstructed: number;
  prediction: number;
  gap: number;
  consistent: boolean;
}

export function efficiencyReadout(
  response: ExplainResponse,
  tolerance = 1e-6,
): EfficiencyReadout {
  const phiSum = FEATURE_LABELS.reduce((acc, [key]) => acc + response.phi[key], 0);
  const reconstructed = response.phi0 + phiSum;
  const prediction = response.prediction_microstrain;
  const gap = Math.abs(reconstructed - prediction);
  const scale = Math.max(Math.abs(prediction), 1.0);
  return {
    phi0: response.phi0,
    phiSum,
    reconstructed,
    prediction,
    gap,
    consistent: gap <= tolerance * scale,
  };
}
