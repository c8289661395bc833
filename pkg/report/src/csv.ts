/** Minimal CSV reader for the crosshedge artifact files (no quoting, '.'
 * decimal separator, header row mandatory). */

import * as fs from "node:fs";

export interface CsvTable {
  file: string;
  header: string[];
  rows: string[][];
}

export class SchemaError extends Error {
  constructor(public file: string, message: string) {
    super(`${file}: ${message}`);
    this.name = "SchemaError";
  }
}

export function readCsv(path: string): CsvTable {
  let text: string;
  try {
    text = fs.readFileSync(path, "utf-8");
  } catch {
    throw new SchemaError(path, "file not found or unreadable");
  }
  const lines = text.split(/\r?\n/).filter((ln) => ln.length > 0);
  if (lines.length < 1) {
    throw new SchemaError(path, "empty file (header row mandatory)");
  }
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((ln) => ln.split(","));
  const bad = rows.findIndex((r) => r.length !== header.length);
  if (bad >= 0) {
    throw new SchemaError(path, `row ${bad + 2} has ${rows[bad].length} fields, expected ${header.length}`);
  }
  return { file: path, header, rows };
}

/** Assert the table carries the given columns; report every offender. */
export function requireColumns(table: CsvTable, names: string[]): Map<string, number> {
  const index = new Map<string, number>();
  const missing: string[] = [];
  for (const name of names) {
    const i = table.header.indexOf(name);
    if (i < 0) missing.push(name);
    else index.set(name, i);
  }
  if (missing.length > 0) {
    throw new SchemaError(table.file, `missing columns: ${missing.join(", ")}`);
  }
  return index;
}

export function numericColumn(table: CsvTable, name: string): number[] {
  const idx = requireColumns(table, [name]).get(name)!;
  return table.rows.map((r, k) => {
    const v = Number(r[idx]);
    if (Number.isNaN(v) && r[idx] !== "nan") {
      throw new SchemaError(table.file, `column ${name}, row ${k + 2}: not a number (${r[idx]})`);
    }
    return v;
  });
}
