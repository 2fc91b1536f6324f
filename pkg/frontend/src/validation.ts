// Form validation: every field must be valid before submit is enabled.

export const MAX_DAYS = 161;

export interface FormValues {
  density: string;
  fc: string;
  e: string;
  initialCreep: string;
  days: string;
}

export interface FieldErrors {
  density?: string;
  fc?: string;
  e?: string;
  initialCreep?: string;
  days?: string;
}

function parseNumber(raw: string): number | null {
  const trimmed = raw.trim();
  if (trimmed === '') return null;
  const value = Number(trimmed);
  return Number.isFinite(value) ? value : null;
}

export function validateForm(values: FormValues): FieldErrors {
  const errors: FieldErrors = {};

  const positives: [keyof FormValues & keyof FieldErrors, string][] = [
    ['density', 'density (kg/m³)'],
    ['fc', 'compressive strength (ksc)'],
    ['e', 'elastic modulus (ksc)'],
  ];
  for (const [key, label] of positives) {
    const value = parseNumber(values[key]);
    if (value === null) errors[key] = `${label} must be a number`;
    else if (value <= 0) errors[key] = `${label} must be positive`;
  }

  const creep = parseNumber(values.initialCreep);
  if (creep === null) errors.initialCreep = 'initial creep must be a number';
  else if (creep < 0) errors.initialCreep = 'initial creep cannot be negative';

  const days = parseNumber(values.days);
  if (days === null || !Number.isInteger(days)) {
    errors.days = 'duration must be a whole number of days';
  } else if (days < 1 || days > MAX_DAYS) {
    errors.days = `duration must lie between 1 and ${MAX_DAYS} days`;
  }

  return errors;
}

export function isValid(errors: FieldErrors): boolean {
  return Object.keys(errors).length === 0;
}

export function toRequest(values: FormValues) {
  return {
    density_kg_m3: Number(values.density),
    fc_ksc: Number(values.fc),
    e_ksc: Number(values.e),
    initial_creep_microstrain: Number(values.initialCreep),
    days: Number(values.days),
  };
}
