// Trajectory CSV export matching the service's trajectory schema.

export const CSV_HEADER = 'day,creep_microstrain';

export interface TrajectoryPoint {
  day: number;
  creep: number;
}

export function toCsv(days: number[], creep: number[]): string {
  if (days.length !== creep.length) {
    throw new Error(`days (${days.length}) and creep (${creep.length}) differ in length`);
  }
  const lines = [CSV_HEADER];
  for (let i = 0; i < days.length; i++) {
    lines.push(`${days[i]},${String(creep[i])}`);
  }
  return lines.join('\n') + '\n';
}

export function parseCsv(text: string): TrajectoryPoint[] {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length === 0 || lines[0].trim() !== CSV_HEADER) {
    throw new Error(`expected header "${CSV_HEADER}"`);
  }
  return lines.slice(1).map((line, i) => {
    const [dayRaw, creepRaw] = line.split(',');
    const day = Number(dayRaw);
    const creep = Number(creepRaw);
    if (!Number.isInteger(day) || !Number.isFinite(creep)) {
      throw new Error(`bad row ${i + 2}: "${line}"`);
    }
    return { day, creep };
  });
}
