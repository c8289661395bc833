/** Report orchestration: resolve artifact files for each requested figure,
 * render SVGs, and write an index page.  Rendering never recomputes model
 * quantities; it only reads serialized artifacts. */

import * as fs from "node:fs";
import * as path from "node:path";

import { SchemaError } from "./csv.js";
import * as figures from "./figures.js";
import {
  loadBoundary, loadCorrTable, loadFilterTrace, loadHedgeSummary, loadSurface,
} from "./schemas.js";

export const FIGURE_KINDS = [
  "price_surface",
  "hedge_field",
  "exercise_boundary",
  "hedge_error_hist",
  "filter_fan",
  "corr_curve",
] as const;

export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface ReportSpec {
  inputDir: string;
  outDir: string;
  figures: FigureKind[];
  format: "svg";
  dpi: number;
}

export interface RenderedFigure {
  kind: FigureKind;
  file: string;
  title: string;
}

function findSurfaceFile(dir: string): string {
  for (const name of ["surface.csv", "american_surface.csv", "marginal_surface.csv"]) {
    const p = path.join(dir, name);
    if (fs.existsSync(p)) return p;
  }
  throw new SchemaError(path.join(dir, "surface.csv"), "no surface artifact found");
}

function findHedgeSummaries(dir: string): string[] {
  const files = fs.readdirSync(dir)
    .filter((f) => /^hedge_summary.*\.json$/.test(f))
    .sort();
  if (files.length === 0) {
    throw new SchemaError(path.join(dir, "hedge_summary.json"), "no hedge summaries found");
  }
  return files.map((f) => path.join(dir, f));
}

function buildFigure(kind: FigureKind, spec: ReportSpec): figures.Figure {
  const dir = spec.inputDir;
  switch (kind) {
    case "corr_curve":
      return figures.corrCurve(loadCorrTable(path.join(dir, "corr_table.csv")), spec.dpi);
    case "price_surface":
      return figures.surfaceFigure(loadSurface(findSurfaceFile(dir)), "p",
                                   "Indifference price", spec.dpi);
    case "hedge_field":
      return figures.surfaceFigure(loadSurface(findSurfaceFile(dir)), "theta_h",
                                   "Optimal hedge ratio", spec.dpi);
    case "exercise_boundary":
      return figures.exerciseBoundary(loadBoundary(path.join(dir, "boundary.csv")), spec.dpi);
    case "hedge_error_hist":
      return figures.hedgeErrorHistogram(findHedgeSummaries(dir).map(loadHedgeSummary),
                                         spec.dpi);
    case "filter_fan":
      return figures.filterFan(loadFilterTrace(path.join(dir, "filter_trace.csv")), spec.dpi);
  }
}

const TITLES: Record<FigureKind, string> = {
  price_surface: "Indifference price surface",
  hedge_field: "Hedge-ratio field",
  exercise_boundary: "Exercise boundary",
  hedge_error_hist: "Hedging-error histograms",
  filter_fan: "Filter trace fan chart",
  corr_curve: "Correlation vs residual risk",
};

export function render(spec: ReportSpec): RenderedFigure[] {
  if (spec.format !== "svg") {
    throw new Error(`unsupported image format: ${spec.format} (svg only)`);
  }
  for (const kind of spec.figures) {
    if (!FIGURE_KINDS.includes(kind)) {
      throw new Error(`unknown figure kind: ${kind}`);
    }
  }
  fs.mkdirSync(spec.outDir, { recursive: true });
  const rendered: RenderedFigure[] = [];
  for (const kind of spec.figures) {
    const fig = buildFigure(kind, spec);
    const file = `${kind}.svg`;
    fs.writeFileSync(path.join(spec.outDir, file), fig.svg, "utf-8");
    rendered.push({ kind, file, title: TITLES[kind] });
  }
  fs.writeFileSync(path.join(spec.outDir, "index.html"), indexPage(spec, rendered), "utf-8");
  return rendered;
}

function indexPage(spec: ReportSpec, rendered: RenderedFigure[]): string {
  const manifestPath = path.join(spec.inputDir, "manifest.json");
  let manifestNote = "";
  if (fs.existsSync(manifestPath)) {
    try {
      const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
      const seed = manifest?.config?.sim?.seed ?? manifest?.seed_override ?? "n/a";
      manifestNote = `<p>source run: <code>${manifest.subcommand ?? "?"}</code>, ` +
        `seed <code>${seed}</code> (<a href="manifest.json">manifest</a>)</p>`;
    } catch {
      manifestNote = "<p>manifest.json present but unreadable</p>";
    }
  }
  const items = rendered
    .map((r) => `<section><h2>${r.title}</h2><img src="${r.file}" alt="${r.kind}"/></section>`)
    .join("\n");
  return `<!DOCTYPE html>
<html lang="en"><head><meta charset="utf-8"/><title>crosshedge report</title></head>
<body>
<h1>crosshedge report</h1>
${manifestNote}
${items.length > 0 ? items : "<p>no figures requested</p>"}
</body></html>
`;
}
