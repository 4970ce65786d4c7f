// Counts-vs-energy scan plot on a bare canvas. Pure scaling math lives in
// plotGeometry so it can be unit-tested without a DOM.

import type { ScanPoint } from "./points.js";

export interface Geometry {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
  toX(e: number, width: number): number;
  toY(c: number, height: number): number;
}

const PAD = 36;

export function plotGeometry(points: ScanPoint[]): Geometry {
  const xs = points.map((p) => p.e_set_ev);
  const ys = points.map((p) => p.counts);
  let xMin = Math.min(...xs);
  let xMax = Math.max(...xs);
  let yMin = Math.min(...ys, 0);
  let yMax = Math.max(...ys);
  if (xMax === xMin) {
    xMin -= 0.5;
    xMax += 0.5;
  }
  if (yMax === yMin) {
    yMax = yMin + 1;
  }
  return {
    xMin, xMax, yMin, yMax,
    toX: (e, width) =>
      PAD + ((e - xMin) / (xMax - xMin)) * (width - 2 * PAD),
    toY: (c, height) =>
      height - PAD - ((c - yMin) / (yMax - yMin)) * (height - 2 * PAD),
  };
}

export function drawScan(canvas: HTMLCanvasElement, points: ScanPoint[],
                         label: string): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.font = "12px sans-serif";
  if (points.length === 0) {
    ctx.fillStyle = "#777";
    ctx.fillText("no scan data", width / 2 - 36, height / 2);
    return;
  }
  const g = plotGeometry(points);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(PAD, PAD, width - 2 * PAD, height - 2 * PAD);
  ctx.fillStyle = "#444";
  ctx.fillText(g.xMin.toFixed(1), PAD, height - PAD + 14);
  ctx.fillText(g.xMax.toFixed(1), width - PAD - 24, height - PAD + 14);
  ctx.fillText(g.yMax.toFixed(0), 2, PAD + 4);
  ctx.fillText(g.yMin.toFixed(0), 2, height - PAD);

  ctx.strokeStyle = "#0b6";
  ctx.beginPath();
  points.forEach((p, i) => {
    const x = g.toX(p.e_set_ev, width);
    const y = g.toY(p.counts, height);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#0b6";
  for (const p of points) {
    ctx.beginPath();
    ctx.arc(g.toX(p.e_set_ev, width), g.toY(p.counts, height), 2.5,
            0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.fillStyle = "#444";
  ctx.fillText(label, PAD, 16);
}
