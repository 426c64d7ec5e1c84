export { parseCsv, columnIndex, SchemaError } from './csv.js';
export type { Table } from './csv.js';
export { fitLoglogSlope, median } from './slope.js';
export type { SlopeFit } from './slope.js';
export {
  buildSeries,
  overlayPoints,
  readSlopeAnnotations,
  renderSvg,
  validateSpec,
} from './plot.js';
export type { Aggregate, BuildResult, PlotSpec, Series } from './plot.js';
export { main } from './render.js';
