#!/usr/bin/env node
/** CLI: render --spec plotspec.json
 * Reads the sweep CSV named by the spec, aggregates, fits slopes, and
 * writes one SVG figure. Exits 2 on spec/schema problems. */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { SchemaError, parseCsv } from './csv.js';
import { buildSeries, overlayPoints, renderSvg, validateSpec } from './plot.js';

export function main(argv: string[]): number {
  const i = argv.indexOf('--spec');
  if (i < 0 || i + 1 >= argv.length) {
    console.error('usage: render --spec plotspec.json');
    return 2;
  }
  let specPath = argv[i + 1];
  try {
    const spec = validateSpec(JSON.parse(fs.readFileSync(specPath, 'utf8')));
    if (spec.format === 'png') {
      // no rasterizer dependency; the vector output carries the same content
      console.error('png output is not supported in this build; use format "svg"');
      return 2;
    }
    const base = path.dirname(specPath);
    const resolve = (p: string) => (path.isAbsolute(p) ? p : path.join(base, p));
    const table = parseCsv(fs.readFileSync(resolve(spec.input_csv), 'utf8'));
    const { series, warnings } = buildSeries(table, spec);
    for (const w of warnings) {
      console.error(`warning: ${w}`);
    }
    if (series.length === 0) {
      console.error('error: no plottable series');
      return 2;
    }
    const overlay = spec.overlay
      ? overlayPoints(fs.readFileSync(resolve(spec.overlay), 'utf8'), spec.x)
      : undefined;
    const svg = renderSvg(series, spec, overlay);
    fs.mkdirSync(path.dirname(resolve(spec.output)) || '.', { recursive: true });
    fs.writeFileSync(resolve(spec.output), svg);
    for (const s of series) {
      console.log(`${s.key}: slope ${s.fit.slope.toFixed(4)} (r2 ${s.fit.r2.toFixed(3)})`);
    }
    return 0;
  } catch (err) {
    if (err instanceof SchemaError || err instanceof SyntaxError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    if ((err as NodeJS.ErrnoException).code === 'ENOENT') {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    throw err;
  }
}

if (process.argv[1] && path.basename(process.argv[1]).startsWith('render')) {
  process.exit(main(process.argv.slice(2)));
}
