/** Deterministic SVG primitives: fixed float formatting, no timestamps,
 * stable element ordering. */

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2",
];

export function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  const s = x.toPrecision(6);
  return s.includes(".") ? s.replace(/\.?0+$/, "").replace(/\.?0+e/, "e") : s;
}

export interface Scale {
  (v: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 === 0 ? 1 : d1 - d0;
  const f = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.range = range;
  return f;
}

/** Round tick positions covering the domain (about `count` of them). */
export function ticks(domain: [number, number], count = 5): number[] {
  const [lo, hi] = domain;
  if (!(hi > lo)) return [lo];
  const rawStep = (hi - lo) / Math.max(1, count);
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const norm = rawStep / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12 * Math.abs(step); v += step) {
    out.push(Math.abs(v) < 1e-12 * step ? 0 : v);
  }
  return out;
}

export interface Frame {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
  x: Scale;
  y: Scale;
}

export function makeFrame(
  xDomain: [number, number],
  yDomain: [number, number],
  width = 640,
  height = 420,
): Frame {
  const margin = { top: 36, right: 24, bottom: 46, left: 64 };
  return {
    width,
    height,
    margin,
    x: linearScale(xDomain, [margin.left, width - margin.right]),
    y: linearScale(yDomain, [height - margin.bottom, margin.top]),
  };
}

export function polyline(points: Array<[number, number]>, frame: Frame): string {
  return points
    .map(([x, y], i) => `${i === 0 ? "M" : "L"}${fmt(frame.x(x))},${fmt(frame.y(y))}`)
    .join("");
}

export function pathEl(d: string, stroke: string, opts: { width?: number; dash?: string; fill?: string } = {}): string {
  const dash = opts.dash ? ` stroke-dasharray="${opts.dash}"` : "";
  return `<path d="${d}" fill="${opts.fill ?? "none"}" stroke="${stroke}" stroke-width="${opts.width ?? 1.5}"${dash}/>`;
}

export function circle(cx: number, cy: number, r: number, fill: string): string {
  return `<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="${fmt(r)}" fill="${fill}"/>`;
}

export function rect(x: number, y: number, w: number, h: number, fill: string, opacity = 1): string {
  const op = opacity === 1 ? "" : ` fill-opacity="${fmt(opacity)}"`;
  return `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"${op}/>`;
}

export function text(x: number, y: number, content: string, opts: { size?: number; anchor?: string; rotate?: number } = {}): string {
  const rot = opts.rotate ? ` transform="rotate(${opts.rotate} ${fmt(x)} ${fmt(y)})"` : "";
  return `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${opts.size ?? 12}" ` +
    `text-anchor="${opts.anchor ?? "start"}" font-family="sans-serif"${rot}>${escapeXml(content)}</text>`;
}

export function axes(frame: Frame, xLabel: string, yLabel: string, title: string): string {
  const { x, y, width, height, margin } = frame;
  const parts: string[] = [];
  const y0 = height - margin.bottom;
  parts.push(pathEl(`M${fmt(x.range[0])},${fmt(y0)}L${fmt(x.range[1])},${fmt(y0)}`, "#333", { width: 1 }));
  parts.push(pathEl(`M${fmt(x.range[0])},${fmt(y.range[0])}L${fmt(x.range[0])},${fmt(y.range[1])}`, "#333", { width: 1 }));
  for (const t of ticks(x.domain)) {
    parts.push(pathEl(`M${fmt(x(t))},${fmt(y0)}L${fmt(x(t))},${fmt(y0 + 5)}`, "#333", { width: 1 }));
    parts.push(text(x(t), y0 + 18, fmt(t), { anchor: "middle", size: 10 }));
  }
  for (const t of ticks(y.domain)) {
    parts.push(pathEl(`M${fmt(x.range[0] - 5)},${fmt(y(t))}L${fmt(x.range[0])},${fmt(y(t))}`, "#333", { width: 1 }));
    parts.push(text(x.range[0] - 8, y(t) + 3, fmt(t), { anchor: "end", size: 10 }));
  }
  parts.push(text((x.range[0] + x.range[1]) / 2, height - 10, xLabel, { anchor: "middle" }));
  parts.push(text(16, (y.range[0] + y.range[1]) / 2, yLabel, { anchor: "middle", rotate: -90 }));
  parts.push(text((x.range[0] + x.range[1]) / 2, 20, title, { anchor: "middle", size: 14 }));
  return parts.join("\n");
}

export function legend(frame: Frame, entries: Array<{ label: string; color: string }>): string {
  const x0 = frame.x.range[1] - 150;
  return entries
    .map((e, i) => {
      const y = frame.y.range[1] + 14 * i;
      return rect(x0, y - 8, 10, 10, e.color) + text(x0 + 14, y + 1, e.label, { size: 10 });
    })
    .join("\n");
}

export function document(frame: Frame, body: string, dpi = 96): string {
  const scale = dpi / 96;
  const w = Math.round(frame.width * scale);
  const h = Math.round(frame.height * scale);
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${w}" height="${h}" ` +
    `viewBox="0 0 ${frame.width} ${frame.height}">\n` +
    `<rect width="${frame.width}" height="${frame.height}" fill="white"/>\n${body}\n</svg>\n`;
}

/** Two-color diverging-free heat ramp (light to dark blue). */
export function heatColor(v: number, lo: number, hi: number): string {
  const t = hi > lo ? Math.min(1, Math.max(0, (v - lo) / (hi - lo))) : 0;
  const c0 = [247, 251, 255];
  const c1 = [8, 48, 107];
  const mix = c0.map((a, i) => Math.round(a + (c1[i] - a) * t));
  return `rgb(${mix[0]},${mix[1]},${mix[2]})`;
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
