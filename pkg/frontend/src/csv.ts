/** Minimal reader for the sweep CSV format: optional leading comment lines
 * starting with "# ", then a header row, then plain comma-separated values
 * (no quoting is ever emitted by the producer). */

export interface Table {
  columns: string[];
  rows: string[][];
}

export class SchemaError extends Error {}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0 && !l.startsWith('#'));
  if (lines.length === 0) {
    throw new SchemaError('empty CSV');
  }
  const columns = lines[0].split(',');
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(',');
    if (cells.length !== columns.length) {
      throw new SchemaError(`row ${i + 1} has ${cells.length} cells, header has ${columns.length}`);
    }
    rows.push(cells);
  }
  return { columns, rows };
}

export function columnIndex(table: Table, name: string): number {
  const i = table.columns.indexOf(name);
  if (i < 0) {
    throw new SchemaError(`column ${JSON.stringify(name)} not in header [${table.columns.join(', ')}]`);
  }
  return i;
}
