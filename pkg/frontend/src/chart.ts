// Dependency-free SVG line chart. Pure string construction so the
// renderer is unit-testable without a DOM.

export interface ChartOptions {
  width?: number;
  height?: number;
  margin?: number;
}

function ticks(min: number, max: number, count: number): number[] {
  if (max === min) return [min];
  const step = (max - min) / (count - 1);
  return Array.from({ length: count }, (_, i) => min + i * step);
}

function fmt(value: number): string {
  return Math.abs(value) >= 100 ? value.toFixed(0) : value.toPrecision(3);
}

export function renderLineChart(
  xs: number[],
  ys: number[],
  options: ChartOptions = {},
): string {
  if (xs.length !== ys.length || xs.length === 0) {
    throw new Error('chart needs equal-length, non-empty series');
  }
  const width = options.width ?? 640;
  const height = options.height ?? 320;
  const margin = options.margin ?? 42;

  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(0, ...ys);
  const yMax = Math.max(...ys) || 1;
  const sx = (x: number) =>
    xMax === xMin
      ? width / 2
      : margin + ((x - xMin) / (xMax - xMin)) * (width - 2 * margin);
  const sy = (y: number) =>
    height - margin - ((y - yMin) / (yMax - yMin || 1)) * (height - 2 * margin);

  const path = xs
    .map((x, i) => `${i === 0 ? 'M' : 'L'}${sx(x).toFixed(1)},${sy(ys[i]).toFixed(1)}`)
    .join(' ');
  const points = xs
    .map(
      (x, i) =>
        `<circle class="pt" cx="${sx(x).toFixed(1)}" cy="${sy(ys[i]).toFixed(1)}" r="2.5">` +
        `<title>day ${x}: ${fmt(ys[i])} µε</title></circle>`,
    )
    .join('');

  const yTicks = ticks(yMin, yMax, 5)
    .map((v) => {
      const y = sy(v).toFixed(1);
      return (
        `<line class="grid" x1="${margin}" y1="${y}" x2="${width - margin}" y2="${y}"/>` +
        `<text class="tick" x="${margin - 6}" y="${y}" text-anchor="end" dy="0.32em">${fmt(v)}</text>`
      );
    })
    .join('');
  const xTicks = ticks(xMin, xMax, Math.min(xs.length, 6))
    .map((v) => {
      const x = sx(v).toFixed(1);
      return `<text class="tick" x="${x}" y="${height - margin + 16}" text-anchor="middle">${Math.round(v)}</text>`;
    })
    .join('');

  return (
    `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="creep trajectory">` +
    yTicks +
    xTicks +
    `<line class="axis" x1="${margin}" y1="${height - margin}" x2="${width - margin}" y2="${height - margin}"/>` +
    `<line class="axis" x1="${margin}" y1="${margin}" x2="${margin}" y2="${height - margin}"/>` +
    `<text class="label" x="${width / 2}" y="${height - 6}" text-anchor="middle">day</text>` +
    `<text class="label" x="12" y="${height / 2}" transform="rotate(-90 12 ${height / 2})" text-anchor="middle">creep (µε)</text>` +
    `<path class="line" d="${path}" fill="none"/>` +
    points +
    `</svg>`
  );
}

export function countChartPoints(svg: string): number {
  return (svg.match(/<circle class="pt"/g) ?? []).length;
}
