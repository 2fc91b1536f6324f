// DOM wiring for the what-if interface: parameter form -> prediction
// chart, scrollable table, summary statistics, CSV download, and the
// feature-attribution panel. All numbers come from the service; the
// client only re-checks the additive attribution identity.

import { PredictionClient, ApiFailure } from './api.js';
import { attributionBars, efficiencyReadout } from './attribution.js';
import { countChartPoints, renderLineChart } from './chart.js';
import { toCsv } from './csv.js';
import type { PredictResponse } from './types.js';
import { FormValues, isValid, toRequest, validateForm } from './validation.js';

const client = new PredictionClient('');

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

const fields: Record<keyof FormValues, HTMLInputElement> = {
  density: el('density'),
  fc: el('fc'),
  e: el('e'),
  initialCreep: el('initial-creep'),
  days: el('days'),
};

let lastResponse: PredictResponse | null = null;

function readForm(): FormValues {
  return {
    density: fields.density.value,
    fc: fields.fc.value,
    e: fields.e.value,
    initialCreep: fields.initialCreep.value,
    days: fields.days.value,
  };
}

function refreshValidation(): boolean {
  const errors = validateForm(readForm());
  for (const key of Object.keys(fields) as (keyof FormValues)[]) {
    const message = errors[key] ?? '';
    el(`${fields[key].id}-error`).textContent = message;
    fields[key].classList.toggle('invalid', message !== '');
  }
  const ok = isValid(errors);
  el<HTMLButtonElement>('submit').disabled = !ok;
  return ok;
}

function showBanner(message: string): void {
  const banner = el('banner');
  banner.textContent = message;
  banner.classList.remove('hidden');
}

function clearBanner(): void {
  el('banner').classList.add('hidden');
}

function renderResult(response: PredictResponse): void {
  lastResponse = response;
  el('chart').innerHTML = renderLineChart(response.days, response.creep_microstrain);
  el('point-count').textContent =
    `${countChartPoints(el('chart').innerHTML)} daily points`;

  const rows = response.days
    .map(
      (day, i) =>
        `<tr><td>${day}</td><td>${response.creep_microstrain[i].toFixed(1)}</td></tr>`,
    )
    .join('');
  el('table-body').innerHTML = rows;

  el('summary-final').textContent = response.summary.final_value.toFixed(1);
  el('summary-max').textContent = response.summary.max.toFixed(1);
  el('summary-mean').textContent = response.summary.mean.toFixed(1);
  el('results').classList.remove('hidden');
  el<HTMLButtonElement>('download').disabled = false;
}

async function renderAttribution(): Promise<void> {
  const panel = el('attribution');
  try {
    const values = readForm();
    const request = toRequest(values);
    const explained = await client.explain({
      density_kg_m3: request.density_kg_m3,
      fc_ksc: request.fc_ksc,
      e_ksc: request.e_ksc,
      initial_creep_microstrain: request.initial_creep_microstrain,
    });
    const bars = attributionBars(explained);
    el('bars').innerHTML = bars
      .map((bar) => {
        const span = Math.max(2, Math.round(bar.magnitude * 100));
        const side = bar.phi >= 0 ? 'pos' : 'neg';
        return (
          `<div class="bar-row"><span class="bar-label">${bar.label}</span>` +
          `<div class="bar-track"><div class="bar ${side}" style="width:${span}%"></div></div>` +
          `<span class="bar-value">${bar.phi.toFixed(2)} µε</span></div>`
        );
      })
      .join('');
    const readout = efficiencyReadout(explained);
    el('efficiency').textContent =
      `base ${readout.phi0.toFixed(2)} + contributions ${readout.phiSum.toFixed(2)} ` +
      `= ${readout.reconstructed.toFixed(2)} µε vs next-step prediction ` +
      `${readout.prediction.toFixed(2)} µε ${readout.consistent ? '✓' : '✗ (inconsistent)'}`;
    panel.classList.remove('hidden');
  } catch {
    panel.classList.add('hidden'); // degrade quietly when /explain is absent
  }
}

async function submit(event: Event): Promise<void> {
  event.preventDefault();
  if (!refreshValidation()) return;
  clearBanner();
  const button = el<HTMLButtonElement>('submit');
  button.disabled = true;
  button.textContent = 'predicting…';
  try {
    const response = await client.predict(toRequest(readForm()));
    if (response !== null) {
      renderResult(response);
      void renderAttribution();
    }
  } catch (err) {
    if (err instanceof ApiFailure) {
      showBanner(`prediction rejected: ${err.message}`);
    } else {
      showBanner('prediction service unreachable — is the server running?');
    }
  } finally {
    button.textContent = 'predict';
    refreshValidation();
  }
}

function download(): void {
  if (!lastResponse) return;
  const blob = new Blob([toCsv(lastResponse.days, lastResponse.creep_microstrain)], {
    type: 'text/csv',
  });
  const url = URL.createObjectURL(blob);
  const link = document.createElement('a');
  link.href = url;
  link.download = 'trajectory.csv';
  link.click();
  URL.revokeObjectURL(url);
}

async function showModelInfo(): Promise<void> {
  try {
    const info = await client.modelInfo();
    el('model-info').textContent =
      `model: ${info.param_count.toLocaleString()} parameters, ` +
      `d_model ${info.config['d_model']}, ${info.config['n_layers']} layers`;
  } catch {
    el('model-info').textContent = 'model info unavailable';
  }
}

for (const input of Object.values(fields)) {
  input.addEventListener('input', refreshValidation);
}
el('form').addEventListener('submit', submit);
el('download').addEventListener('click', download);
refreshValidation();
void showModelInfo();
