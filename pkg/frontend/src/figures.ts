import {
  KindMismatchError,
  ResultRecord,
  loadSeries,
  numericColumn,
  scalar,
  stringColumn,
} from "./schema.js";
import {
  COLORS,
  HEIGHT,
  MARGIN,
  SvgCanvas,
  WIDTH,
  drawFrame,
  label,
  linearScale,
  logScale,
  ticks,
} from "./svg.js";

export type FigureKind =
  | "covariance"
  | "gmc-mass"
  | "kpz"
  | "fusion"
  | "radial"
  | "derivative";

/** Figure kind -> the experiment kind whose records it accepts. */
export const EXPECTED_RECORD_KIND: Record<FigureKind, string> = {
  covariance: "gff-cov",
  "gmc-mass": "gmc-mass",
  kpz: "kpz",
  fusion: "fusion",
  radial: "radial",
  derivative: "derivative",
};

const X0 = MARGIN.left;
const X1 = WIDTH - MARGIN.right;
const Y0 = HEIGHT - MARGIN.bottom;
const Y1 = MARGIN.top;

function caption(record: ResultRecord): string {
  return (
    `kind=${record.kind} fingerprint=${record.fingerprint} ` +
    `seed=${record.seed} replicas=${record.replicas} v${record.version}`
  );
}

function checkKind(figure: FigureKind, record: ResultRecord): void {
  const expected = EXPECTED_RECORD_KIND[figure];
  if (record.kind !== expected) {
    throw new KindMismatchError(
      `figure '${figure}' needs a '${expected}' record, got '${record.kind}'`,
    );
  }
}

function pad(lo: number, hi: number, frac = 0.08): [number, number] {
  const span = hi - lo || Math.abs(hi) || 1;
  return [lo - frac * span, hi + frac * span];
}

/** Empirical vs analytic covariance at the probed point pairs. */
function renderCovariance(record: ResultRecord, jsonPath: string): string {
  const table = loadSeries(jsonPath, record, "pairs", [
    "z1",
    "z2",
    "empirical",
    "analytic",
    "stderr",
  ]);
  const emp = numericColumn(table, "empirical");
  const exact = numericColumn(table, "analytic");
  const se = numericColumn(table, "stderr");
  const all = [...emp, ...exact];
  const [lo, hi] = pad(Math.min(...all), Math.max(...all));
  const xs = linearScale(lo, hi, X0, X1);
  const ys = linearScale(lo, hi, Y0, Y1);
  const svg = new SvgCanvas();
  drawFrame(svg, ticks(lo, hi), ticks(lo, hi), xs, ys,
    "analytic covariance", "empirical covariance");
  svg.line(xs(lo), ys(lo), xs(hi), ys(hi), COLORS.reference, 1, "4 3");
  for (let i = 0; i < emp.length; i++) {
    svg.errorBar(xs(exact[i]), ys(emp[i] - se[i]), ys(emp[i] + se[i]), COLORS.series[0]);
    svg.circle(xs(exact[i]), ys(emp[i]), 3.5, COLORS.series[0]);
  }
  svg.text(X1 - 4, Y1 + 14, "y = x", { anchor: "end", size: 11, fill: COLORS.reference });
  return svg.render("GFF covariance: empirical vs analytic", caption(record));
}

/** Mean total chaos mass per gamma against the exact sphere area. */
function renderGmcMass(record: ResultRecord, jsonPath: string): string {
  const table = loadSeries(jsonPath, record, "masses", [
    "gamma",
    "backend",
    "mean_mass",
    "stderr",
  ]);
  const gamma = numericColumn(table, "gamma");
  const backend = stringColumn(table, "backend");
  const mass = numericColumn(table, "mean_mass");
  const se = numericColumn(table, "stderr");
  const area = 4 * Math.PI;
  const yAll = mass.flatMap((m, i) => [m - 3 * se[i], m + 3 * se[i], area]);
  const [yLo, yHi] = pad(Math.min(...yAll), Math.max(...yAll), 0.15);
  const [xLo, xHi] = pad(Math.min(...gamma), Math.max(...gamma), 0.15);
  const xs = linearScale(xLo, xHi, X0, X1);
  const ys = linearScale(yLo, yHi, Y0, Y1);
  const svg = new SvgCanvas();
  drawFrame(svg, ticks(xLo, xHi), ticks(yLo, yHi), xs, ys, "gamma", "mean total mass");
  svg.line(xs(xLo), ys(area), xs(xHi), ys(area), COLORS.reference, 1, "4 3");
  svg.text(X1 - 4, ys(area) - 5, "4 pi", { anchor: "end", size: 11, fill: COLORS.reference });
  const backends = [...new Set(backend)];
  for (let i = 0; i < gamma.length; i++) {
    const color = COLORS.series[backends.indexOf(backend[i]) % COLORS.series.length];
    const x = xs(gamma[i]) + (backend[i] === "mollified" ? 6 : 0); // avoid overplot
    svg.errorBar(x, ys(mass[i] - se[i]), ys(mass[i] + se[i]), color);
    svg.circle(x, ys(mass[i]), 3.5, color);
  }
  backends.forEach((b, i) => {
    svg.text(X0 + 8, Y1 + 14 + 14 * i, b, {
      size: 11,
      fill: COLORS.series[i % COLORS.series.length],
    });
  });
  return svg.render("GMC mass normalization", caption(record));
}

/** KPZ identity: LHS, RHS, and their ratio with error bars. */
function renderKpz(record: ResultRecord): string {
  const names = ["lhs", "rhs", "ratio"] as const;
  const stats = names.map((n) => scalar(record, n));
  const yAll = stats.flatMap((s) => [
    s.value - 3 * (s.stderr ?? 0),
    s.value + 3 * (s.stderr ?? 0),
  ]);
  const [yLo, yHi] = pad(Math.min(...yAll, 0), Math.max(...yAll, 1), 0.15);
  const xs = linearScale(-0.5, names.length - 0.5, X0, X1);
  const ys = linearScale(yLo, yHi, Y0, Y1);
  const svg = new SvgCanvas();
  drawFrame(svg, [], ticks(yLo, yHi), xs, ys, "", "estimate");
  svg.line(xs(-0.5), ys(1), xs(2.5), ys(1), COLORS.reference, 1, "4 3");
  svg.text(X1 - 4, ys(1) - 5, "ratio = 1", { anchor: "end", size: 11, fill: COLORS.reference });
  stats.forEach((s, i) => {
    const se = s.stderr ?? 0;
    svg.errorBar(xs(i), ys(s.value - se), ys(s.value + se), COLORS.series[i]);
    svg.circle(xs(i), ys(s.value), 4, COLORS.series[i]);
    svg.text(xs(i), Y0 + 16, names[i], { anchor: "middle", size: 11 });
    svg.text(xs(i), ys(s.value) - 10, label(s.value), { anchor: "middle", size: 10 });
  });
  return svg.render("KPZ identity check", caption(record));
}

/** Fusion log-log scaling with the record's fitted and predicted slopes. */
function renderFusion(record: ResultRecord, jsonPath: string): string {
  const table = loadSeries(jsonPath, record, "scaling", [
    "separation",
    "estimate",
    "stderr",
  ]);
  const t = numericColumn(table, "separation");
  const v = numericColumn(table, "estimate");
  const se = numericColumn(table, "stderr");
  const slope = scalar(record, "slope");
  const predicted = scalar(record, "predicted");
  const xLo = Math.min(...t) / 1.3;
  const xHi = Math.max(...t) * 1.3;
  const yAll = v.flatMap((y, i) => [Math.max(y - se[i], y / 10), y + se[i]]);
  const yLo = Math.min(...yAll) / 1.5;
  const yHi = Math.max(...yAll) * 1.5;
  const xs = logScale(xLo, xHi, X0, X1);
  const ys = logScale(yLo, yHi, Y0, Y1);
  const svg = new SvgCanvas();
  drawFrame(svg, t, [yLo, Math.sqrt(yLo * yHi), yHi], xs, ys,
    "separation t (log)", "pair correlator (log)", label);
  // overlay: the predicted power law, anchored at the largest separation.
  // Both the anchor and the exponent come from the record (no refitting).
  const anchor = v[0];
  const overlay: Array<[number, number]> = t.map((ti) => [
    ti,
    anchor * Math.pow(ti / t[0], predicted.value),
  ]);
  svg.polyline(overlay.map(([a, b]) => [xs(a), ys(b)]), COLORS.reference, 1.5, "6 4");
  for (let i = 0; i < t.length; i++) {
    const lo = Math.max(v[i] - se[i], yLo);
    svg.errorBar(xs(t[i]), ys(lo), ys(v[i] + se[i]), COLORS.series[0]);
    svg.circle(xs(t[i]), ys(v[i]), 3.5, COLORS.series[0]);
  }
  svg.text(X0 + 8, Y1 + 14,
    `fitted slope ${label(slope.value)} +/- ${label(slope.stderr ?? 0)}`,
    { size: 11, fill: COLORS.series[0] });
  svg.text(X0 + 8, Y1 + 28, `predicted slope ${label(predicted.value)}`,
    { size: 11, fill: COLORS.reference });
  return svg.render("Fusion scaling of the pair correlator", caption(record));
}

/** Radial band moments against the lemma envelope, per horizon. */
function renderRadial(record: ResultRecord, jsonPath: string): string {
  const table = loadSeries(jsonPath, record, "bands", [
    "k",
    "horizon",
    "estimate",
    "stderr",
    "shape",
  ]);
  const k = numericColumn(table, "k");
  const horizon = numericColumn(table, "horizon");
  const est = numericColumn(table, "estimate");
  const shape = numericColumn(table, "shape");
  const constant = scalar(record, "constant");
  const positive = est.filter((e) => e > 0);
  const yLo = Math.min(...positive) / 3;
  const yHi = Math.max(...est.map((e, i) => Math.max(e, constant.value * shape[i]))) * 2;
  const [xLo, xHi] = pad(Math.min(...k), Math.max(...k), 0.1);
  const xs = linearScale(xLo, xHi, X0, X1);
  const ys = logScale(yLo, yHi, Y0, Y1);
  const yTicks = [yLo, Math.sqrt(yLo * yHi), yHi];
  const svg = new SvgCanvas();
  drawFrame(svg, ticks(xLo, xHi, 6), yTicks, xs, ys, "band k", "band moment (log)");
  const horizons = [...new Set(horizon)];
  horizons.forEach((r, hi) => {
    const color = COLORS.series[hi % COLORS.series.length];
    const idx = horizon.map((h, i) => (h === r ? i : -1)).filter((i) => i >= 0);
    const envelope = idx.map((i): [number, number] =>
      [xs(k[i]), ys(constant.value * shape[i])]);
    svg.polyline(envelope, color, 1, "5 3");
    for (const i of idx) {
      if (est[i] > 0) svg.circle(xs(k[i]), ys(est[i]), 3, color);
    }
    svg.text(X0 + 8, Y1 + 14 + 14 * hi, `horizon ${label(r)}`, { size: 11, fill: color });
  });
  svg.text(X1 - 4, Y1 + 14, `C = ${label(constant.value)}`,
    { anchor: "end", size: 11, fill: COLORS.reference });
  return svg.render("Radial band moments vs drift envelope", caption(record));
}

/** Derivative cross-check: symbolic sum vs finite difference, Re and Im. */
function renderDerivative(record: ResultRecord, jsonPath: string): string {
  const table = loadSeries(jsonPath, record, "derivative", [
    "method",
    "re",
    "im",
    "stderr_re",
    "stderr_im",
  ]);
  const method = stringColumn(table, "method");
  const re = numericColumn(table, "re");
  const im = numericColumn(table, "im");
  const seRe = numericColumn(table, "stderr_re");
  const seIm = numericColumn(table, "stderr_im");
  const yAll = method.flatMap((_, i) => [
    re[i] - 3 * seRe[i], re[i] + 3 * seRe[i],
    im[i] - 3 * seIm[i], im[i] + 3 * seIm[i],
  ]);
  const [yLo, yHi] = pad(Math.min(...yAll), Math.max(...yAll), 0.2);
  const xs = linearScale(-0.5, 3.5, X0, X1);
  const ys = linearScale(yLo, yHi, Y0, Y1);
  const svg = new SvgCanvas();
  drawFrame(svg, [], ticks(yLo, yHi), xs, ys, "", "derivative estimate");
  svg.line(xs(-0.5), ys(0), xs(3.5), ys(0), COLORS.reference, 1, "4 3");
  const slots = ["Re", "Im"];
  method.forEach((m, i) => {
    slots.forEach((part, p) => {
      const x = 2 * p + i;
      const val = p === 0 ? re[i] : im[i];
      const se = p === 0 ? seRe[i] : seIm[i];
      const color = COLORS.series[i % COLORS.series.length];
      svg.errorBar(xs(x), ys(val - se), ys(val + se), color);
      svg.circle(xs(x), ys(val), 4, color);
      svg.text(xs(x), Y0 + 16, `${part} ${m.replace("_", " ")}`,
        { anchor: "middle", size: 9 });
    });
  });
  const sigmaRe = scalar(record, "sigma_re");
  const sigmaIm = scalar(record, "sigma_im");
  svg.text(X0 + 8, Y1 + 14,
    `|diff| = ${label(sigmaRe.value)} sigma (Re), ${label(sigmaIm.value)} sigma (Im)`,
    { size: 11 });
  return svg.render("Derivative: term calculus vs finite difference", caption(record));
}

/** Render one figure kind from a result record; returns the SVG text. */
export function renderFigure(
  kind: FigureKind,
  record: ResultRecord,
  jsonPath: string,
): string {
  checkKind(kind, record);
  switch (kind) {
    case "covariance":
      return renderCovariance(record, jsonPath);
    case "gmc-mass":
      return renderGmcMass(record, jsonPath);
    case "kpz":
      return renderKpz(record);
    case "fusion":
      return renderFusion(record, jsonPath);
    case "radial":
      return renderRadial(record, jsonPath);
    case "derivative":
      return renderDerivative(record, jsonPath);
  }
}

export const FIGURE_KINDS = Object.keys(EXPECTED_RECORD_KIND) as FigureKind[];
