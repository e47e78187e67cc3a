#!/usr/bin/env node
/**
 * analyze <kind> <csv...> -o <img> [--pair A|B]
 *
 * kind: forces | pairs | convergence | pareto. Multiple CSVs render one
 * figure each; with -o naming a single .svg only one input is allowed,
 * otherwise -o is treated as an output directory.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { basename, extname, join } from "node:path";
import { EmptyData, SchemaMismatch } from "./csv.js";
import { KINDS } from "./plots.js";

function usage(): string {
  return "usage: analyze <forces|pairs|convergence|pareto> <csv...> -o <img> [--pair NAME]";
}

export function main(argv: string[]): number {
  const args = [...argv];
  const inputs: string[] = [];
  let out: string | undefined;
  let pair: string | undefined;
  let kind: string | undefined;
  while (args.length) {
    const tok = args.shift()!;
    if (tok === "-o" || tok === "--out") out = args.shift();
    else if (tok === "--pair") pair = args.shift();
    else if (kind === undefined) kind = tok;
    else inputs.push(tok);
  }
  if (!kind || !(kind in KINDS) || inputs.length === 0 || !out) {
    console.error(usage());
    return 1;
  }
  const render = KINDS[kind];
  try {
    if (inputs.length === 1 && extname(out) === ".svg") {
      writeFileSync(out, render(inputs[0], pair));
      console.log(out);
    } else {
      mkdirSync(out, { recursive: true });
      for (const input of inputs) {
        const name = basename(input, extname(input)) + `_${kind}.svg`;
        const target = join(out, name);
        writeFileSync(target, render(input, pair));
        console.log(target);
      }
    }
  } catch (err) {
    if (err instanceof SchemaMismatch || err instanceof EmptyData) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    if (err instanceof Error && "code" in err && err.code === "ENOENT") {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
  return 0;
}

// invoked directly (not imported by tests)
if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
