/** Figure builders: each consumes validated artifact records and returns a
 * deterministic SVG string plus the plotted series for testing. */

import {
  BoundaryRow, CorrRow, FilterTraceRow, HedgeSummary, SurfaceRow,
} from "./schemas.js";
import * as svg from "./svg.js";

export interface Figure {
  svg: string;
  meta: Record<string, unknown>;
}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (Number.isNaN(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) {
    hi = lo === Infinity ? 1 : lo + 1;
    lo = lo === Infinity ? 0 : lo;
  }
  return [lo, hi];
}

function uniqueSorted(values: number[]): number[] {
  return [...new Set(values)].sort((a, b) => a - b);
}

/** Correlation against the residual-risk scale factors: the diffusion scale
 * sqrt(1-rho^2) falls from (0, 1) to (1, 0). */
export function corrCurve(rows: CorrRow[], dpi = 96): Figure {
  const sorted = [...rows].sort((a, b) => a.rho - b.rho);
  const frame = svg.makeFrame([0, 1], [0, 1]);
  const diff = sorted.map((r) => [r.rho, r.sqrt_one_minus_rho_sq] as [number, number]);
  const drift = sorted.map((r) => [r.rho, r.one_minus_rho_sq] as [number, number]);
  const body = [
    svg.axes(frame, "correlation rho", "scale factor", "Residual risk vs correlation"),
    svg.pathEl(svg.polyline(diff, frame), svg.PALETTE[0], { width: 2 }),
    svg.pathEl(svg.polyline(drift, frame), svg.PALETTE[1], { width: 2, dash: "5,3" }),
    ...diff.map(([x, y]) => svg.circle(frame.x(x), frame.y(y), 3, svg.PALETTE[0])),
    svg.legend(frame, [
      { label: "sqrt(1-rho^2)  (diffusion)", color: svg.PALETTE[0] },
      { label: "1-rho^2  (drift)", color: svg.PALETTE[1] },
    ]),
  ].join("\n");
  return { svg: svg.document(frame, body, dpi), meta: { diffusion: diff, drift } };
}

/** Price or hedge-ratio field.  A single s-slice renders as one curve per
 * exported time; several slices render as a heatmap at the earliest time. */
export function surfaceFigure(rows: SurfaceRow[], value: "p" | "theta_h",
                              title: string, dpi = 96): Figure {
  const sValues = uniqueSorted(rows.map((r) => r.s));
  if (sValues.length === 1) {
    return surfaceLines(rows, value, title, dpi);
  }
  return surfaceHeatmap(rows, value, title, dpi);
}

function surfaceLines(rows: SurfaceRow[], value: "p" | "theta_h",
                      title: string, dpi: number): Figure {
  const times = uniqueSorted(rows.map((r) => r.t));
  const frame = svg.makeFrame(extent(rows.map((r) => r.y)),
                              extent(rows.map((r) => r[value])));
  const parts = [svg.axes(frame, "non-traded price y", value, title)];
  const entries: Array<{ label: string; color: string }> = [];
  times.forEach((t, i) => {
    const pts = rows
      .filter((r) => r.t === t)
      .sort((a, b) => a.y - b.y)
      .map((r) => [r.y, r[value]] as [number, number]);
    const color = svg.PALETTE[i % svg.PALETTE.length];
    parts.push(svg.pathEl(svg.polyline(pts, frame), color));
    entries.push({ label: `t = ${svg.fmt(t)}`, color });
  });
  parts.push(svg.legend(frame, entries.slice(0, 9)));
  return { svg: svg.document(frame, parts.join("\n"), dpi),
           meta: { times, mode: "lines" } };
}

function surfaceHeatmap(rows: SurfaceRow[], value: "p" | "theta_h",
                        title: string, dpi: number): Figure {
  const t0 = Math.min(...rows.map((r) => r.t));
  const slice = rows.filter((r) => r.t === t0);
  const sVals = uniqueSorted(slice.map((r) => r.s));
  const yVals = uniqueSorted(slice.map((r) => r.y));
  const frame = svg.makeFrame(extent(sVals), extent(yVals));
  const [lo, hi] = extent(slice.map((r) => r[value]));
  const parts = [svg.axes(frame, "stock price s", "non-traded price y",
                          `${title} (t = ${svg.fmt(t0)})`)];
  const cellW = (frame.x.range[1] - frame.x.range[0]) / sVals.length;
  const cellH = (frame.y.range[0] - frame.y.range[1]) / yVals.length;
  for (const r of slice) {
    parts.push(svg.rect(frame.x(r.s) - cellW / 2, frame.y(r.y) - cellH / 2,
                        cellW + 0.5, cellH + 0.5, svg.heatColor(r[value], lo, hi)));
  }
  return { svg: svg.document(frame, parts.join("\n"), dpi),
           meta: { t0, range: [lo, hi], mode: "heatmap" } };
}

/** Critical exercise prices over time, one curve per s-slice; an empty
 * exercise region renders as an annotated blank frame. */
export function exerciseBoundary(rows: BoundaryRow[], dpi = 96): Figure {
  const finite = rows.filter((r) => !Number.isNaN(r.y_critical));
  const frame = svg.makeFrame(extent(rows.map((r) => r.t)),
                              extent(finite.length > 0
                                ? finite.map((r) => r.y_critical) : [0, 1]));
  const parts = [svg.axes(frame, "time t", "critical price y*", "Exercise boundary")];
  const slices = uniqueSorted(rows.map((r) => r.s_slice));
  slices.forEach((s, i) => {
    const pts = finite
      .filter((r) => r.s_slice === s)
      .sort((a, b) => a.t - b.t)
      .map((r) => [r.t, r.y_critical] as [number, number]);
    if (pts.length > 0) {
      parts.push(svg.pathEl(svg.polyline(pts, frame),
                            svg.PALETTE[i % svg.PALETTE.length], { width: 2 }));
    }
  });
  if (finite.length === 0) {
    parts.push(svg.text((frame.x.range[0] + frame.x.range[1]) / 2,
                        (frame.y.range[0] + frame.y.range[1]) / 2,
                        "no exercise region", { anchor: "middle" }));
  }
  return { svg: svg.document(frame, parts.join("\n"), dpi),
           meta: { slices: slices.length, points: finite.length } };
}

/** Overlaid terminal hedging-error histograms, one per policy summary, with
 * mean +- 3 s.e. annotations. */
export function hedgeErrorHistogram(summaries: HedgeSummary[], dpi = 96): Figure {
  const allEdges = summaries.flatMap((s) => s.terminal_error_histogram.edges);
  const densities = summaries.map((s) => {
    const { edges, counts } = s.terminal_error_histogram;
    const total = counts.reduce((a, b) => a + b, 0) || 1;
    return counts.map((c, i) => c / total / (edges[i + 1] - edges[i]));
  });
  const frame = svg.makeFrame(extent(allEdges),
                              [0, Math.max(...densities.flat()) * 1.05]);
  const parts = [svg.axes(frame, "terminal hedging error X_T - C(Y_T)", "density",
                          "Hedging error by policy")];
  const entries: Array<{ label: string; color: string }> = [];
  summaries.forEach((s, i) => {
    const color = svg.PALETTE[i % svg.PALETTE.length];
    const { edges } = s.terminal_error_histogram;
    const steps: Array<[number, number]> = [];
    densities[i].forEach((d, k) => {
      steps.push([edges[k], d], [edges[k + 1], d]);
    });
    parts.push(svg.pathEl(svg.polyline(steps, frame), color, { width: 1.5 }));
    const m = s.terminal_error.mean;
    parts.push(svg.pathEl(
      `M${svg.fmt(frame.x(m))},${svg.fmt(frame.y.range[0])}` +
      `L${svg.fmt(frame.x(m))},${svg.fmt(frame.y.range[1])}`,
      color, { width: 1, dash: "2,2" }));
    entries.push({
      label: `${s.policy}: sd ${svg.fmt(s.terminal_error.sd)}, ` +
        `mean ${svg.fmt(m)} +- ${svg.fmt(3 * s.terminal_error.se)}`,
      color,
    });
  });
  parts.push(svg.legend(frame, entries));
  return { svg: svg.document(frame, parts.join("\n"), dpi),
           meta: { policies: summaries.map((s) => s.policy) } };
}

/** Fan chart of the filtered stock Sharpe ratio across paths: quantile
 * bands around the median. */
export function filterFan(rows: FilterTraceRow[], dpi = 96): Figure {
  const times = uniqueSorted(rows.map((r) => r.t));
  const byTime = new Map<number, number[]>(times.map((t) => [t, []]));
  for (const r of rows) byTime.get(r.t)!.push(r.lambda_hat_s);
  const bands: Array<{ q: number; values: Array<[number, number]> }> = [];
  for (const q of [0.1, 0.25, 0.5, 0.75, 0.9]) {
    bands.push({
      q,
      values: times.map((t) => [t, quantile(byTime.get(t)!, q)] as [number, number]),
    });
  }
  const frame = svg.makeFrame(extent(times),
                              extent(bands.flatMap((b) => b.values.map((v) => v[1]))));
  const parts = [svg.axes(frame, "time t", "filtered Sharpe ratio",
                          "Filtered stock Sharpe ratio fan")];
  const fill = (outerLo: Array<[number, number]>, outerHi: Array<[number, number]>,
                opacity: number) => {
    const up = svg.polyline(outerLo, frame);
    const down = [...outerHi].reverse()
      .map(([x, y]) => `L${svg.fmt(frame.x(x))},${svg.fmt(frame.y(y))}`).join("");
    parts.push(`<path d="${up}${down}Z" fill="${svg.PALETTE[0]}" ` +
      `fill-opacity="${svg.fmt(opacity)}" stroke="none"/>`);
  };
  fill(bands[0].values, bands[4].values, 0.15);
  fill(bands[1].values, bands[3].values, 0.25);
  parts.push(svg.pathEl(svg.polyline(bands[2].values, frame), svg.PALETTE[0],
                        { width: 2 }));
  return { svg: svg.document(frame, parts.join("\n"), dpi),
           meta: { times: times.length, paths: byTime.get(times[0])!.length } };
}

function quantile(values: number[], q: number): number {
  const sorted = [...values].sort((a, b) => a - b);
  const pos = (sorted.length - 1) * q;
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
}
