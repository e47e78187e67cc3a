/**
 * Minimal deterministic SVG figure builder.
 *
 * No timestamps, no random ids, fixed fonts, and fixed-precision
 * coordinate formatting: identical inputs produce byte-identical files.
 */

export type Scale = "linear" | "log";

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color: string;
  dashed?: boolean;
  markers?: boolean;
}

const WIDTH = 720;
const HEIGHT = 480;
const MARGIN = { left: 78, right: 24, top: 42, bottom: 56 };
const FONT = "font-family=\"Helvetica, Arial, sans-serif\"";

function fmt(v: number): string {
  return v.toFixed(2);
}

function niceTicksLinear(lo: number, hi: number, n = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / n)));
  const err = (span / n) / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = mult * step;
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / s) * s; t <= hi + 1e-12 * span; t += s) ticks.push(t);
  return ticks;
}

function ticksLog(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
    const t = Math.pow(10, e);
    if (t >= lo / 1.0001 && t <= hi * 1.0001) ticks.push(t);
  }
  return ticks.length >= 2 ? ticks : [lo, hi];
}

function tickLabel(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 0.01 && a < 10000) {
    return Number(v.toPrecision(4)).toString();
  }
  return v.toExponential(1);
}

export class Figure {
  private title: string;
  private xlabel: string;
  private ylabel: string;
  private xscale: Scale;
  private yscale: Scale;
  private series: Series[] = [];

  constructor(opts: { title: string; xlabel: string; ylabel: string; xscale?: Scale; yscale?: Scale }) {
    this.title = opts.title;
    this.xlabel = opts.xlabel;
    this.ylabel = opts.ylabel;
    this.xscale = opts.xscale ?? "linear";
    this.yscale = opts.yscale ?? "linear";
  }

  add(series: Series): void {
    if (series.x.length !== series.y.length) throw new Error("series length mismatch");
    this.series.push(series);
  }

  private domain(axis: "x" | "y", scale: Scale): [number, number] {
    let vals = this.series.flatMap((s) => (axis === "x" ? s.x : s.y));
    if (scale === "log") vals = vals.filter((v) => v > 0);
    if (vals.length === 0) throw new Error("no plottable data");
    let lo = Math.min(...vals);
    let hi = Math.max(...vals);
    if (lo === hi) {
      lo -= 0.5;
      hi += 0.5;
    }
    if (scale === "log") {
      return [lo / 1.3, hi * 1.3];
    }
    const pad = 0.05 * (hi - lo);
    return [lo - pad, hi + pad];
  }

  render(): string {
    const [x0, x1] = this.domain("x", this.xscale);
    const [y0, y1] = this.domain("y", this.yscale);
    const px = (v: number) => {
      const t =
        this.xscale === "log"
          ? (Math.log(v) - Math.log(x0)) / (Math.log(x1) - Math.log(x0))
          : (v - x0) / (x1 - x0);
      return MARGIN.left + t * (WIDTH - MARGIN.left - MARGIN.right);
    };
    const py = (v: number) => {
      const t =
        this.yscale === "log"
          ? (Math.log(v) - Math.log(y0)) / (Math.log(y1) - Math.log(y0))
          : (v - y0) / (y1 - y0);
      return HEIGHT - MARGIN.bottom - t * (HEIGHT - MARGIN.top - MARGIN.bottom);
    };

    const parts: string[] = [];
    parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
    );
    parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
    parts.push(
      `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16" ${FONT}>${this.title}</text>`,
    );

    const xticks = this.xscale === "log" ? ticksLog(x0, x1) : niceTicksLinear(x0, x1);
    const yticks = this.yscale === "log" ? ticksLog(y0, y1) : niceTicksLinear(y0, y1);
    for (const t of xticks) {
      const x = px(t);
      parts.push(
        `<line x1="${fmt(x)}" y1="${MARGIN.top}" x2="${fmt(x)}" y2="${HEIGHT - MARGIN.bottom}" stroke="#dddddd" stroke-width="1"/>`,
      );
      parts.push(
        `<text x="${fmt(x)}" y="${HEIGHT - MARGIN.bottom + 18}" text-anchor="middle" font-size="11" ${FONT}>${tickLabel(t)}</text>`,
      );
    }
    for (const t of yticks) {
      const y = py(t);
      parts.push(
        `<line x1="${MARGIN.left}" y1="${fmt(y)}" x2="${WIDTH - MARGIN.right}" y2="${fmt(y)}" stroke="#dddddd" stroke-width="1"/>`,
      );
      parts.push(
        `<text x="${MARGIN.left - 8}" y="${fmt(y + 4)}" text-anchor="end" font-size="11" ${FONT}>${tickLabel(t)}</text>`,
      );
    }
    parts.push(
      `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${WIDTH - MARGIN.left - MARGIN.right}" height="${HEIGHT - MARGIN.top - MARGIN.bottom}" fill="none" stroke="#333333"/>`,
    );
    parts.push(
      `<text x="${(MARGIN.left + WIDTH - MARGIN.right) / 2}" y="${HEIGHT - 14}" text-anchor="middle" font-size="13" ${FONT}>${this.xlabel}</text>`,
    );
    parts.push(
      `<text x="20" y="${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2}" text-anchor="middle" font-size="13" ${FONT} transform="rotate(-90 20 ${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2})">${this.ylabel}</text>`,
    );

    for (const s of this.series) {
      const pts = s.x.map((vx, i) => `${fmt(px(vx))},${fmt(py(s.y[i]))}`).join(" ");
      const dash = s.dashed ? ` stroke-dasharray="7 5"` : "";
      parts.push(
        `<polyline points="${pts}" fill="none" stroke="${s.color}" stroke-width="1.8"${dash} data-label="${s.label}"/>`,
      );
      if (s.markers) {
        for (let i = 0; i < s.x.length; i++) {
          parts.push(
            `<circle cx="${fmt(px(s.x[i]))}" cy="${fmt(py(s.y[i]))}" r="3.2" fill="${s.color}"/>`,
          );
        }
      }
    }

    // legend, fixed placement
    this.series.forEach((s, i) => {
      const y = MARGIN.top + 16 + 18 * i;
      const x = WIDTH - MARGIN.right - 160;
      const dash = s.dashed ? ` stroke-dasharray="7 5"` : "";
      parts.push(`<line x1="${x}" y1="${y}" x2="${x + 26}" y2="${y}" stroke="${s.color}" stroke-width="1.8"${dash}/>`);
      parts.push(`<text x="${x + 32}" y="${y + 4}" font-size="12" ${FONT}>${s.label}</text>`);
    });

    parts.push("</svg>");
    return parts.join("\n") + "\n";
  }
}
