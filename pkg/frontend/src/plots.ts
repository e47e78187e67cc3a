/**
 * Figure builders for the four plot kinds.
 *
 * Everything is a pure function of the input CSV contents; input files
 * are never modified.
 */

import { loadCsv, numericColumn, EmptyData, Table } from "./csv.js";
import { Figure } from "./svg.js";

const COLORS = ["#1f6fb4", "#d95f02", "#1b9e77", "#7570b3"];

function filterPair(table: Table, pair?: string): { rows: Record<string, string>[]; pair: string } {
  const chosen = pair ?? table.rows[0].pair;
  const rows = table.rows.filter((r) => r.pair === chosen);
  if (rows.length === 0) throw new EmptyData(`${table.path} (pair '${chosen}')`);
  return { rows, pair: chosen };
}

export function forcesFigure(path: string, pair?: string): string {
  const table = loadCsv(path, ["t", "pair", "fx", "fy", "fz", "n_pairs"]);
  const { rows, pair: chosen } = filterPair(table, pair);
  const t = rows.map((r) => Number(r.t));
  const fig = new Figure({
    title: `Contact force on ${chosen.split("|")[0]} from ${chosen.split("|")[1] ?? ""}`,
    xlabel: "time [s]",
    ylabel: "force [N]",
  });
  (["fx", "fy", "fz"] as const).forEach((comp, i) => {
    fig.add({ label: comp, x: t, y: rows.map((r) => Number(r[comp])), color: COLORS[i] });
  });
  return fig.render();
}

export function pairsFigure(path: string, pair?: string): string {
  const table = loadCsv(path, ["t", "pair", "n_pairs"]);
  const { rows, pair: chosen } = filterPair(table, pair);
  const fig = new Figure({
    title: `Active contact pairs (${chosen})`,
    xlabel: "time [s]",
    ylabel: "pair count",
  });
  fig.add({
    label: "n_pairs",
    x: rows.map((r) => Number(r.t)),
    y: rows.map((r) => Number(r.n_pairs)),
    color: COLORS[0],
  });
  return fig.render();
}

export function convergenceFigure(path: string): string {
  const table = loadCsv(path, ["h", "error", "wall_ms"]);
  const h = numericColumn(table, "h");
  const err = numericColumn(table, "error");
  const order = h.map((_, i) => i).sort((a, b) => h[a] - h[b]);
  const hs = order.map((i) => h[i]);
  const es = order.map((i) => err[i]);
  const fig = new Figure({
    title: "Position error vs time step",
    xlabel: "h [s]",
    ylabel: "E(h)",
    xscale: "log",
    yscale: "log",
  });
  fig.add({ label: "measured", x: hs, y: es, color: COLORS[0], markers: true });
  // first-order guide anchored at the largest-h datum
  const hMax = hs[hs.length - 1];
  const eMax = es[es.length - 1];
  fig.add({
    label: "first order",
    x: hs,
    y: hs.map((v) => (eMax * v) / hMax),
    color: "#333333",
    dashed: true,
  });
  return fig.render();
}

export function paretoFigure(path: string): string {
  const table = loadCsv(path, ["h", "error", "wall_ms"]);
  const wall = numericColumn(table, "wall_ms");
  const err = numericColumn(table, "error");
  const order = wall.map((_, i) => i).sort((a, b) => wall[a] - wall[b]);
  const fig = new Figure({
    title: "Accuracy vs cost",
    xlabel: "wall clock [ms]",
    ylabel: "E(h)",
    xscale: "log",
    yscale: "log",
  });
  fig.add({
    label: "runs",
    x: order.map((i) => wall[i]),
    y: order.map((i) => err[i]),
    color: COLORS[1],
    markers: true,
  });
  return fig.render();
}

export const KINDS: Record<string, (path: string, pair?: string) => string> = {
  forces: forcesFigure,
  pairs: pairsFigure,
  convergence: convergenceFigure,
  pareto: paretoFigure,
};
