#!/usr/bin/env node
/**
 * lcft-lab-plots render --kind <figure> --input <record.json> --out <figure.svg>
 *
 * Exit codes: 0 success, 2 usage/config error, 3 record-kind mismatch,
 * 4 schema error (missing file, missing columns, empty series).
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { FIGURE_KINDS, FigureKind, renderFigure } from "./figures.js";
import { KindMismatchError, SchemaError, loadRecord } from "./schema.js";

const EXIT_OK = 0;
const EXIT_USAGE = 2;
const EXIT_KIND = 3;
const EXIT_SCHEMA = 4;

function usage(): string {
  return (
    "usage: lcft-lab-plots render --kind <figure> --input <record.json> --out <figure.svg>\n" +
    `       figure kinds: ${FIGURE_KINDS.join(", ")}`
  );
}

function parseArgs(argv: string[]): { kind: FigureKind; input: string; out: string } {
  if (argv[0] !== "render") {
    throw new UsageError(usage());
  }
  const opts: Record<string, string> = {};
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith("--") || value === undefined) {
      throw new UsageError(usage());
    }
    opts[flag.slice(2)] = value;
  }
  const { kind, input, out } = opts;
  if (!kind || !input || !out) {
    throw new UsageError(usage());
  }
  if (!(FIGURE_KINDS as string[]).includes(kind)) {
    throw new UsageError(`unknown figure kind '${kind}'\n${usage()}`);
  }
  return { kind: kind as FigureKind, input, out };
}

class UsageError extends Error {}

export function main(argv: string[]): number {
  try {
    const { kind, input, out } = parseArgs(argv);
    const record = loadRecord(input);
    const svg = renderFigure(kind, record, input);
    fs.mkdirSync(path.dirname(path.resolve(out)), { recursive: true });
    fs.writeFileSync(out, svg);
    console.log(out);
    return EXIT_OK;
  } catch (e) {
    if (e instanceof UsageError) {
      console.error(e.message);
      return EXIT_USAGE;
    }
    if (e instanceof KindMismatchError) {
      console.error(`input mismatch: ${e.message}`);
      return EXIT_KIND;
    }
    if (e instanceof SchemaError) {
      console.error(`schema error: ${e.message}`);
      return EXIT_SCHEMA;
    }
    throw e;
  }
}

// Invoked directly (not imported by tests)
const invoked = process.argv[1] ? path.resolve(process.argv[1]) : "";
if (invoked.endsWith("cli.ts") || invoked.endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
