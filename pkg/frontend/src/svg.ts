/**
 * Minimal deterministic SVG plotting surface.
 *
 * Every coordinate is rounded to a fixed number of decimals and the
 * output carries no timestamps or environment-dependent content, so a
 * given figure spec always produces byte-identical files.
 */

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { top: 48, right: 24, bottom: 64, left: 72 };

export const COLORS = {
  axis: "#333333",
  grid: "#dddddd",
  series: ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"],
  reference: "#888888",
};

const fmt = (x: number): string => {
  const s = x.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
};

/** Short human-readable tick/value label. */
export const label = (x: number): string => {
  if (x === 0) return "0";
  const a = Math.abs(x);
  if (a >= 0.01 && a < 10000) {
    return String(Number(x.toPrecision(4)));
  }
  return x.toExponential(2);
};

export type Scale = (x: number) => number;

export function linearScale(
  lo: number,
  hi: number,
  outLo: number,
  outHi: number,
): Scale {
  const span = hi - lo || 1;
  return (x) => outLo + ((x - lo) / span) * (outHi - outLo);
}

export function logScale(
  lo: number,
  hi: number,
  outLo: number,
  outHi: number,
): Scale {
  const l = Math.log10(lo);
  const span = Math.log10(hi) - l || 1;
  return (x) => outLo + ((Math.log10(x) - l) / span) * (outHi - outLo);
}

/** Evenly spaced tick positions over [lo, hi]. */
export function ticks(lo: number, hi: number, n = 5): number[] {
  const out: number[] = [];
  for (let i = 0; i <= n; i++) out.push(lo + ((hi - lo) * i) / n);
  return out;
}

export class SvgCanvas {
  private parts: string[] = [];

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${width}"${d}/>`,
    );
  }

  circle(cx: number, cy: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="${r}" fill="${fill}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"/>`,
    );
  }

  text(
    x: number,
    y: number,
    content: string,
    opts: { size?: number; anchor?: string; fill?: string; rotate?: number } = {},
  ): void {
    const size = opts.size ?? 12;
    const anchor = opts.anchor ?? "start";
    const fill = opts.fill ?? COLORS.axis;
    const transform = opts.rotate
      ? ` transform="rotate(${opts.rotate} ${fmt(x)} ${fmt(y)})"`
      : "";
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-family="monospace" font-size="${size}" text-anchor="${anchor}" fill="${fill}"${transform}>${escapeXml(content)}</text>`,
    );
  }

  polyline(points: Array<[number, number]>, stroke: string, width = 1.5, dash = ""): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${width}"${d}/>`,
    );
  }

  /** Vertical error bar with serifs. */
  errorBar(x: number, yLo: number, yHi: number, stroke: string): void {
    this.line(x, yLo, x, yHi, stroke, 1);
    this.line(x - 3, yLo, x + 3, yLo, stroke, 1);
    this.line(x - 3, yHi, x + 3, yHi, stroke, 1);
  }

  render(title: string, caption: string): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
      `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
      `<text x="${WIDTH / 2}" y="24" font-family="monospace" font-size="15" text-anchor="middle" fill="${COLORS.axis}">${escapeXml(title)}</text>`,
      ...this.parts,
      `<text x="${WIDTH / 2}" y="${HEIGHT - 10}" font-family="monospace" font-size="10" text-anchor="middle" fill="${COLORS.reference}">${escapeXml(caption)}</text>`,
      `</svg>`,
      ``,
    ].join("\n");
  }
}

function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Standard frame: axes, ticks, and axis titles for one x/y panel. */
export function drawFrame(
  svg: SvgCanvas,
  xTicks: number[],
  yTicks: number[],
  xScale: Scale,
  yScale: Scale,
  xTitle: string,
  yTitle: string,
  tickLabel: (x: number) => string = label,
): void {
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  for (const t of xTicks) {
    const x = xScale(t);
    svg.line(x, y0, x, y1, COLORS.grid, 0.5);
    svg.text(x, y0 + 16, tickLabel(t), { anchor: "middle", size: 10 });
  }
  for (const t of yTicks) {
    const y = yScale(t);
    svg.line(x0, y, x1, y, COLORS.grid, 0.5);
    svg.text(x0 - 6, y + 3, tickLabel(t), { anchor: "end", size: 10 });
  }
  svg.line(x0, y0, x1, y0, COLORS.axis, 1.2);
  svg.line(x0, y0, x0, y1, COLORS.axis, 1.2);
  svg.text((x0 + x1) / 2, y0 + 34, xTitle, { anchor: "middle", size: 12 });
  svg.text(18, (y0 + y1) / 2, yTitle, { anchor: "middle", size: 12, rotate: -90 });
}
