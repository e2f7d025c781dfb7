import * as fs from "node:fs";
import * as path from "node:path";
import Papa from "papaparse";

/** One scalar statistic as reported by the runner. */
export interface Scalar {
  value: number;
  stderr?: number;
}

/** The JSON result record written by `lcft-lab run`. */
export interface ResultRecord {
  kind: string;
  fingerprint: string;
  params: Record<string, unknown>;
  seed: number;
  replicas: number;
  scalars: Record<string, Scalar>;
  series: Record<string, string[]>; // series name -> column names
  verdicts: Record<string, boolean>;
  passed: boolean;
  version: string;
}

/** A series table rehydrated from its sibling CSV file. */
export interface SeriesTable {
  columns: string[];
  rows: string[][];
}

/** Input rejected: wrong experiment kind for the requested figure. */
export class KindMismatchError extends Error {}

/** Input rejected: missing file, missing columns, or empty series. */
export class SchemaError extends Error {}

const RECORD_FIELDS = [
  "kind",
  "fingerprint",
  "seed",
  "replicas",
  "scalars",
  "series",
  "verdicts",
] as const;

export function loadRecord(jsonPath: string): ResultRecord {
  if (!fs.existsSync(jsonPath)) {
    throw new SchemaError(`result record not found: ${jsonPath}`);
  }
  let doc: unknown;
  try {
    doc = JSON.parse(fs.readFileSync(jsonPath, "utf-8"));
  } catch (e) {
    throw new SchemaError(`result record is not valid JSON: ${jsonPath}`);
  }
  if (typeof doc !== "object" || doc === null) {
    throw new SchemaError("result record root must be an object");
  }
  const rec = doc as Record<string, unknown>;
  for (const f of RECORD_FIELDS) {
    if (!(f in rec)) {
      throw new SchemaError(`result record is missing field '${f}'`);
    }
  }
  return rec as unknown as ResultRecord;
}

/**
 * Load a named series from the CSV sibling of the record file
 * (`<kind>-<fingerprint>-<name>.csv`), checking the expected columns.
 */
export function loadSeries(
  jsonPath: string,
  record: ResultRecord,
  name: string,
  requiredColumns: string[],
): SeriesTable {
  if (!(name in record.series)) {
    throw new SchemaError(`record carries no series '${name}'`);
  }
  const csvPath = path.join(
    path.dirname(jsonPath),
    `${record.kind}-${record.fingerprint}-${name}.csv`,
  );
  if (!fs.existsSync(csvPath)) {
    throw new SchemaError(`series file not found: ${csvPath}`);
  }
  const parsed = Papa.parse<string[]>(fs.readFileSync(csvPath, "utf-8").trim(), {
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`cannot parse ${csvPath}: ${parsed.errors[0].message}`);
  }
  const [columns, ...rows] = parsed.data;
  for (const col of requiredColumns) {
    if (!columns.includes(col)) {
      throw new SchemaError(`series '${name}' is missing column '${col}'`);
    }
  }
  if (rows.length === 0) {
    throw new SchemaError(`series '${name}' has no rows`);
  }
  return { columns, rows };
}

/** Column accessor: numeric values of one named column. */
export function numericColumn(table: SeriesTable, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`missing column '${name}'`);
  }
  return table.rows.map((r) => {
    const v = Number(r[idx]);
    if (!Number.isFinite(v)) {
      throw new SchemaError(`non-numeric value '${r[idx]}' in column '${name}'`);
    }
    return v;
  });
}

/** Column accessor: raw string values of one named column. */
export function stringColumn(table: SeriesTable, name: string): string[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`missing column '${name}'`);
  }
  return table.rows.map((r) => r[idx]);
}

/** Scalar accessor with a clear error for missing statistics. */
export function scalar(record: ResultRecord, name: string): Scalar {
  const s = record.scalars[name];
  if (s === undefined || typeof s.value !== "number") {
    throw new SchemaError(`record carries no scalar '${name}'`);
  }
  return s;
}
