import { SchemaError, Table, columnIndex, parseCsv } from './csv.js';
import { SlopeFit, fitLoglogSlope, median } from './slope.js';

export type Aggregate = 'median' | 'mean' | 'max';

export interface PlotSpec {
  input_csv: string;
  group_by: string[];
  x: string;
  y: string;
  aggregate: Aggregate;
  overlay?: string;
  output: string;
  format: 'svg' | 'png';
}

export interface Series {
  key: string;
  points: Array<[number, number]>;
  fit: SlopeFit;
}

export interface BuildResult {
  series: Series[];
  warnings: string[];
  droppedRows: number;
}

const AGGREGATORS: Record<Aggregate, (v: number[]) => number> = {
  median,
  mean: (v) => v.reduce((a, b) => a + b, 0) / v.length,
  max: (v) => Math.max(...v),
};

export function validateSpec(spec: unknown): PlotSpec {
  const s = spec as Record<string, unknown>;
  for (const field of ['input_csv', 'x', 'y', 'aggregate', 'output', 'format']) {
    if (typeof s[field] !== 'string' || s[field] === '') {
      throw new SchemaError(`plot spec field ${JSON.stringify(field)} missing or not a string`);
    }
  }
  if (!Array.isArray(s.group_by) || s.group_by.some((g) => typeof g !== 'string')) {
    throw new SchemaError('plot spec field "group_by" must be a list of column names');
  }
  if (!(s.aggregate as string in AGGREGATORS)) {
    throw new SchemaError(`aggregate must be one of median, mean, max; got ${JSON.stringify(s.aggregate)}`);
  }
  if (s.format !== 'svg' && s.format !== 'png') {
    throw new SchemaError(`format must be svg or png; got ${JSON.stringify(s.format)}`);
  }
  if (s.overlay !== undefined && typeof s.overlay !== 'string') {
    throw new SchemaError('overlay must be a path if given');
  }
  return s as unknown as PlotSpec;
}

/** Group rows by the group_by columns, aggregate y over rows sharing an x
 * value, and fit a log-log slope per group. Nonpositive x or y values are
 * dropped (counted); groups left empty after dropping are skipped. */
export function buildSeries(table: Table, spec: PlotSpec): BuildResult {
  const xi = columnIndex(table, spec.x);
  const yi = columnIndex(table, spec.y);
  const gi = spec.group_by.map((g) => columnIndex(table, g));

  const groups = new Map<string, Map<number, number[]>>();
  let dropped = 0;
  for (const row of table.rows) {
    const x = Number(row[xi]);
    const y = Number(row[yi]);
    if (!(x > 0) || !(y > 0)) {
      dropped++;
      continue;
    }
    const key = gi.map((i) => row[i]).join(' / ') || 'all';
    let byX = groups.get(key);
    if (!byX) {
      groups.set(key, (byX = new Map()));
    }
    let ys = byX.get(x);
    if (!ys) {
      byX.set(x, (ys = []));
    }
    ys.push(y);
  }

  const agg = AGGREGATORS[spec.aggregate];
  const series: Series[] = [];
  const warnings: string[] = [];
  if (dropped > 0) {
    warnings.push(`dropped ${dropped} rows with nonpositive ${spec.x} or ${spec.y}`);
  }
  for (const [key, byX] of groups) {
    const points = [...byX.entries()]
      .map(([x, ys]): [number, number] => [x, agg(ys)])
      .sort((a, b) => a[0] - b[0]);
    if (points.length < 2) {
      warnings.push(`group ${JSON.stringify(key)} has under 2 usable points, skipped`);
      continue;
    }
    series.push({ key, points, fit: fitLoglogSlope(points) });
  }
  if (series.length === 0) {
    warnings.push('no plottable series');
  }
  return { series, warnings, droppedRows: dropped };
}

export function overlayPoints(text: string, xColumn: string): Array<[number, number]> {
  const table = parseCsv(text);
  const xi = columnIndex(table, xColumn);
  const bi = columnIndex(table, 'bound');
  return table.rows
    .map((r): [number, number] => [Number(r[xi]), Number(r[bi])])
    .filter(([x, y]) => x > 0 && y > 0)
    .sort((a, b) => a[0] - b[0]);
}

// ------------------------------------------------------------------ SVG

const W = 640;
const H = 440;
const ML = 70;
const MR = 20;
const MT = 30;
const MB = 50;
const PALETTE = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b'];

function decadeTicks(lo: number, hi: number): number[] {
  const ticks = [];
  for (let e = Math.floor(lo); e <= Math.ceil(hi); e++) {
    ticks.push(e);
  }
  return ticks;
}

/** Render the series as one log-log SVG figure. The slope annotation text
 * carries the full-precision fitted slope so downstream checks can compare
 * it exactly; identical inputs give identical output bytes. */
export function renderSvg(series: Series[], spec: PlotSpec, overlay?: Array<[number, number]>): string {
  const allPts = series.flatMap((s) => s.points).concat(overlay ?? []);
  if (allPts.length === 0) {
    throw new SchemaError('nothing to plot');
  }
  const lx = allPts.map(([x]) => Math.log10(x));
  const ly = allPts.map(([, y]) => Math.log10(y));
  const x0 = Math.min(...lx);
  const x1 = Math.max(...lx);
  const y0 = Math.min(...ly);
  const y1 = Math.max(...ly);
  const padX = (x1 - x0 || 1) * 0.05;
  const padY = (y1 - y0 || 1) * 0.08;
  const sx = (v: number) =>
    ML + ((Math.log10(v) - x0 + padX) / (x1 - x0 + 2 * padX)) * (W - ML - MR);
  const sy = (v: number) =>
    H - MB - ((Math.log10(v) - y0 + padY) / (y1 - y0 + 2 * padY)) * (H - MT - MB);
  const fmt = (v: number) => v.toFixed(2);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}" font-family="sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${W}" height="${H}" fill="white"/>`);

  for (const e of decadeTicks(x0, x1)) {
    const v = Math.pow(10, e);
    if (Math.log10(v) < x0 - 1e-9 || Math.log10(v) > x1 + 1e-9) continue;
    const px = sx(v);
    parts.push(`<line x1="${fmt(px)}" y1="${MT}" x2="${fmt(px)}" y2="${H - MB}" stroke="#ddd"/>`);
    parts.push(`<text x="${fmt(px)}" y="${H - MB + 18}" text-anchor="middle">1e${e}</text>`);
  }
  for (const e of decadeTicks(y0, y1)) {
    const v = Math.pow(10, e);
    if (Math.log10(v) < y0 - 1e-9 || Math.log10(v) > y1 + 1e-9) continue;
    const py = sy(v);
    parts.push(`<line x1="${ML}" y1="${fmt(py)}" x2="${W - MR}" y2="${fmt(py)}" stroke="#ddd"/>`);
    parts.push(`<text x="${ML - 8}" y="${fmt(py + 4)}" text-anchor="end">1e${e}</text>`);
  }
  parts.push(
    `<rect x="${ML}" y="${MT}" width="${W - ML - MR}" height="${H - MT - MB}" fill="none" stroke="#333"/>`,
  );
  parts.push(`<text x="${(ML + W - MR) / 2}" y="${H - 10}" text-anchor="middle">${spec.x}</text>`);
  parts.push(
    `<text x="18" y="${(MT + H - MB) / 2}" text-anchor="middle" transform="rotate(-90 18 ${(MT + H - MB) / 2})">${spec.y} (${spec.aggregate})</text>`,
  );

  if (overlay && overlay.length >= 2) {
    const d = overlay.map(([x, y], i) => `${i ? 'L' : 'M'}${fmt(sx(x))},${fmt(sy(y))}`).join(' ');
    parts.push(`<path d="${d}" fill="none" stroke="#888" stroke-dasharray="6 4" stroke-width="1.5"/>`);
  }

  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const d = s.points.map(([x, y], j) => `${j ? 'L' : 'M'}${fmt(sx(x))},${fmt(sy(y))}`).join(' ');
    parts.push(`<path d="${d}" fill="none" stroke="${color}" stroke-width="1.5"/>`);
    for (const [x, y] of s.points) {
      parts.push(`<circle cx="${fmt(sx(x))}" cy="${fmt(sy(y))}" r="3" fill="${color}"/>`);
    }
    const ly0 = MT + 16 + 16 * i;
    parts.push(`<line x1="${ML + 10}" y1="${ly0 - 4}" x2="${ML + 34}" y2="${ly0 - 4}" stroke="${color}" stroke-width="1.5"/>`);
    parts.push(
      `<text x="${ML + 40}" y="${ly0}" class="slope-annotation" data-series="${s.key}" data-slope="${s.fit.slope}">${s.key}: slope ${s.fit.slope}</text>`,
    );
  });

  if (overlay && overlay.length >= 2) {
    const ly0 = MT + 16 + 16 * series.length;
    parts.push(`<line x1="${ML + 10}" y1="${ly0 - 4}" x2="${ML + 34}" y2="${ly0 - 4}" stroke="#888" stroke-dasharray="6 4"/>`);
    parts.push(`<text x="${ML + 40}" y="${ly0}">theory bound</text>`);
  }

  parts.push('</svg>');
  return parts.join('\n');
}

/** Pull the per-series slope annotations back out of a rendered figure. */
export function readSlopeAnnotations(svg: string): Map<string, number> {
  const out = new Map<string, number>();
  const re = /data-series="([^"]*)" data-slope="([^"]+)"/g;
  let m;
  while ((m = re.exec(svg)) !== null) {
    out.set(m[1], Number(m[2]));
  }
  return out;
}
