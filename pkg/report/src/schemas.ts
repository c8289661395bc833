/** Typed loaders for the documented crosshedge artifact schemas.  Loaders
 * validate columns/keys up front and report every offender. */

import * as fs from "node:fs";

import { CsvTable, SchemaError, readCsv, requireColumns } from "./csv.js";

export interface SurfaceRow {
  t: number;
  s: number;
  y: number;
  p: number;
  p_s: number;
  p_y: number;
  theta_h: number;
  psi_h: number;
}

const SURFACE_COLUMNS = ["t", "s", "y", "p", "p_s", "p_y", "theta_h", "psi_h"];

export function loadSurface(path: string): SurfaceRow[] {
  const table = readCsv(path);
  const idx = requireColumns(table, SURFACE_COLUMNS);
  return table.rows.map((r) => ({
    t: num(table, r, idx.get("t")!),
    s: num(table, r, idx.get("s")!),
    y: num(table, r, idx.get("y")!),
    p: num(table, r, idx.get("p")!),
    p_s: num(table, r, idx.get("p_s")!),
    p_y: num(table, r, idx.get("p_y")!),
    theta_h: num(table, r, idx.get("theta_h")!),
    psi_h: num(table, r, idx.get("psi_h")!),
  }));
}

export interface BoundaryRow {
  t: number;
  s_slice: number;
  y_critical: number; // NaN marks an empty exercise region
}

export function loadBoundary(path: string): BoundaryRow[] {
  const table = readCsv(path);
  const idx = requireColumns(table, ["t", "s_slice", "y_critical"]);
  return table.rows.map((r) => ({
    t: num(table, r, idx.get("t")!),
    s_slice: num(table, r, idx.get("s_slice")!),
    y_critical: Number(r[idx.get("y_critical")!]),
  }));
}

export interface CorrRow {
  rho: number;
  one_minus_rho_sq: number;
  sqrt_one_minus_rho_sq: number;
}

export function loadCorrTable(path: string): CorrRow[] {
  const table = readCsv(path);
  const idx = requireColumns(table, ["rho", "one_minus_rho_sq", "sqrt_one_minus_rho_sq"]);
  return table.rows.map((r) => ({
    rho: num(table, r, idx.get("rho")!),
    one_minus_rho_sq: num(table, r, idx.get("one_minus_rho_sq")!),
    sqrt_one_minus_rho_sq: num(table, r, idx.get("sqrt_one_minus_rho_sq")!),
  }));
}

export interface FilterTraceRow {
  path_id: number;
  t: number;
  lambda_hat_s: number;
  lambda_hat_y: number;
}

export function loadFilterTrace(path: string): FilterTraceRow[] {
  const table = readCsv(path);
  const idx = requireColumns(table, ["path_id", "t", "lambda_hat_s", "lambda_hat_y"]);
  return table.rows.map((r) => ({
    path_id: num(table, r, idx.get("path_id")!),
    t: num(table, r, idx.get("t")!),
    lambda_hat_s: num(table, r, idx.get("lambda_hat_s")!),
    lambda_hat_y: num(table, r, idx.get("lambda_hat_y")!),
  }));
}

export interface HedgeSummary {
  policy: string;
  terminal_error: { mean: number; sd: number; se: number };
  terminal_error_histogram: { edges: number[]; counts: number[] };
}

export function loadHedgeSummary(path: string): HedgeSummary {
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(path, "utf-8"));
  } catch {
    throw new SchemaError(path, "not readable as JSON");
  }
  const obj = raw as Record<string, unknown>;
  const missing = ["policy", "terminal_error", "terminal_error_histogram"]
    .filter((k) => !(k in obj));
  if (missing.length > 0) {
    throw new SchemaError(path, `missing keys: ${missing.join(", ")}`);
  }
  const hist = obj.terminal_error_histogram as { edges?: number[]; counts?: number[] };
  if (!Array.isArray(hist.edges) || !Array.isArray(hist.counts) ||
      hist.edges.length !== hist.counts.length + 1) {
    throw new SchemaError(path, "terminal_error_histogram needs edges (n+1) and counts (n)");
  }
  const te = obj.terminal_error as Record<string, number>;
  for (const k of ["mean", "sd", "se"]) {
    if (typeof te[k] !== "number") {
      throw new SchemaError(path, `terminal_error.${k} missing or not a number`);
    }
  }
  return obj as unknown as HedgeSummary;
}

function num(table: CsvTable, row: string[], i: number): number {
  const v = Number(row[i]);
  if (Number.isNaN(v)) {
    throw new SchemaError(table.file, `column ${table.header[i]}: not a number (${row[i]})`);
  }
  return v;
}
