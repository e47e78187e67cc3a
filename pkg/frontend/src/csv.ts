/**
 * CSV loading against the engine's documented log schemas.
 *
 * forces.csv      t,pair,fx,fy,fz,n_pairs
 * stats.csv       t,newton_iters,ls_trials,min_dist,wall_ms
 * convergence.csv h,error,wall_ms
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export class SchemaMismatch extends Error {
  constructor(path: string, column: string) {
    super(`${path}: missing required column '${column}'`);
    this.name = "SchemaMismatch";
  }
}

export class EmptyData extends Error {
  constructor(path: string) {
    super(`${path}: no data rows`);
    this.name = "EmptyData";
  }
}

export interface Table {
  path: string;
  columns: string[];
  rows: Record<string, string>[];
}

export function loadCsv(path: string, required: string[]): Table {
  const text = readFileSync(path, "utf8");
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  const columns = parsed.meta.fields ?? [];
  for (const col of required) {
    if (!columns.includes(col)) throw new SchemaMismatch(path, col);
  }
  if (parsed.data.length === 0) throw new EmptyData(path);
  return { path, columns, rows: parsed.data };
}

export function numericColumn(table: Table, name: string): number[] {
  return table.rows.map((r) => {
    const v = Number(r[name]);
    if (!Number.isFinite(v)) {
      throw new SchemaMismatch(table.path, `${name} (non-numeric value '${r[name]}')`);
    }
    return v;
  });
}
