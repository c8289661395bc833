export { FIGURE_KINDS, FigureKind, ReportSpec, RenderedFigure, render } from "./render.js";
export * as figures from "./figures.js";
export * as schemas from "./schemas.js";
export { SchemaError } from "./csv.js";
