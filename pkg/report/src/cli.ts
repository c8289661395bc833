#!/usr/bin/env node
/** crosshedge-report --input DIR --out DIR [--figures a,b,c] [--format svg] [--dpi 96] */

import { SchemaError } from "./csv.js";
import { FIGURE_KINDS, FigureKind, ReportSpec, render } from "./render.js";

function parseArgs(argv: string[]): ReportSpec {
  const opts: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${key}`);
    }
    opts[key.slice(2)] = argv[i + 1];
  }
  if (!opts.input || !opts.out) {
    throw new Error("usage: crosshedge-report --input DIR --out DIR " +
      "[--figures a,b,c] [--format svg] [--dpi 96]");
  }
  const figures = (opts.figures === undefined
    ? [...FIGURE_KINDS]
    : opts.figures === "" ? [] : opts.figures.split(",")) as FigureKind[];
  return {
    inputDir: opts.input,
    outDir: opts.out,
    figures,
    format: (opts.format ?? "svg") as "svg",
    dpi: Number(opts.dpi ?? "96"),
  };
}

export function main(argv: string[]): number {
  try {
    const spec = parseArgs(argv);
    const rendered = render(spec);
    console.log(JSON.stringify({ figures: rendered.map((r) => r.file) }));
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 2;
    }
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js")
  || process.argv[1]?.endsWith("cli.ts");
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
