/** Least-squares line fit in log10-log10 coordinates, written from scratch
 * here (not shared with the producer) so the tests cross-check the two
 * implementations against each other. */

export interface SlopeFit {
  slope: number;
  intercept: number;
  r2: number;
}

export function fitLoglogSlope(points: Array<[number, number]>): SlopeFit {
  const pts = points.filter(([x, y]) => x > 0 && y > 0);
  if (pts.length < 2) {
    throw new Error(`need at least 2 positive points, got ${pts.length}`);
  }
  const xs = pts.map(([x]) => Math.log10(x));
  const ys = pts.map(([, y]) => Math.log10(y));
  const n = xs.length;
  const mx = xs.reduce((a, b) => a + b, 0) / n;
  const my = ys.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  let syy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const slope = sxy / sxx;
  const intercept = my - slope * mx;
  const r2 = syy === 0 ? 1 : (sxy * sxy) / (sxx * syy);
  return { slope, intercept, r2 };
}

export function median(values: number[]): number {
  const v = [...values].sort((a, b) => a - b);
  const h = v.length >> 1;
  return v.length % 2 ? v[h] : (v[h - 1] + v[h]) / 2;
}
