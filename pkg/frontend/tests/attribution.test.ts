import { describe, expect, it } from 'vitest';

import { attributionBars, efficiencyReadout } from '../src/attribution.js';
import type { ExplainResponse } from '../src/types.js';

const RESPONSE: ExplainResponse = {
  phi0: 100.0,
  phi: { density_kg_m3: -4.0, fc_ksc: 1.0, e_ksc: 8.0 },
  prediction_microstrain: 105.0,
  context_policy: 'own-prefix',
};

describe('attributionBars', () => {
  it('keeps the fixed feature order', () => {
    const bars = attributionBars(RESPONSE);
    expect(bars.map((b) => b.feature)).toEqual(['density_kg_m3', 'fc_ksc', 'e_ksc']);
  });

  it('scales magnitudes to the largest contribution', () => {
    const bars = attributionBars(RESPONSE);
    expect(bars[2].magnitude).toBe(1);
    expect(bars[0].magnitude).toBeCloseTo(0.5);
    expect(bars[1].magnitude).toBeCloseTo(0.125);
  });

  it('keeps signs for direction styling', () => {
    const bars = attributionBars(RESPONSE);
    expect(bars[0].phi).toBeLessThan(0);
    expect(bars[2].phi).toBeGreaterThan(0);
  });

  it('survives an all-zero attribution', () => {
    const zero = { ...RESPONSE, phi: { density_kg_m3: 0, fc_ksc: 0, e_ksc: 0 } };
    for (const bar of attributionBars(zero)) {
      expect(bar.magnitude).toBe(0);
    }
  });
});

describe('efficiencyReadout', () => {
  it('confirms the additive identity against the displayed prediction', () => {
    const readout = efficiencyReadout(RESPONSE);
    expect(readout.reconstructed).toBeCloseTo(105.0, 10);
    expect(readout.prediction).toBe(105.0);
    expect(readout.consistent).toBe(true);
  });

  it('flags an inconsistent response', () => {
    const broken = { ...RESPONSE, prediction_microstrain: 200.0 };
    expect(efficiencyReadout(broken).consistent).toBe(false);
  });
});
