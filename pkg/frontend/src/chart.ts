// Canvas rendering of the convergence chart (belief mean with its band,
// observations, target line) and the per-step density bars. Pure display:
// every plotted number comes from the session payload.

import type { Session } from "./api";
import { deriveView } from "./view";

const MARGIN = { left: 44, right: 12, top: 12, bottom: 22 };

// headless DOMs have no 2d context (and some log or throw); charts are
// display-only, so rendering silently skips there
function context2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  try {
    return canvas.getContext("2d");
  } catch {
    return null;
  }
}

interface Scale {
  x: (v: number) => number;
  y: (v: number) => number;
}

function makeScale(
  canvas: HTMLCanvasElement,
  xMax: number,
  yMin: number,
  yMax: number,
): Scale {
  const w = canvas.width - MARGIN.left - MARGIN.right;
  const h = canvas.height - MARGIN.top - MARGIN.bottom;
  return {
    x: (v) => MARGIN.left + (v / Math.max(1, xMax)) * w,
    y: (v) => MARGIN.top + (1 - (v - yMin) / Math.max(1e-9, yMax - yMin)) * h,
  };
}

export function drawConvergence(canvas: HTMLCanvasElement, session: Session): void {
  const ctx = context2d(canvas);
  if (!ctx) return;
  const k = session.plan.target_k;
  const bands = session.history.map((h) => {
    const half = 2 * Math.sqrt(h.belief_after.variance);
    return { step: h.step, mean: h.belief_after.mean, lo: h.belief_after.mean - half, hi: h.belief_after.mean + half, obs: h.averaged_observation };
  });
  const view = deriveView(session);
  const ys = [0, k, view.beliefBandHigh, ...bands.flatMap((b) => [b.lo, b.hi, b.obs])];
  const yMin = Math.min(...ys) - 1;
  const yMax = Math.max(...ys) + 1;
  const s = makeScale(canvas, session.plan.n, yMin, yMax);

  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(MARGIN.left, MARGIN.top, canvas.width - MARGIN.left - MARGIN.right,
    canvas.height - MARGIN.top - MARGIN.bottom);

  // target line
  ctx.strokeStyle = "#2b8a3e";
  ctx.setLineDash([5, 4]);
  ctx.beginPath();
  ctx.moveTo(s.x(0), s.y(k));
  ctx.lineTo(s.x(session.plan.n), s.y(k));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillStyle = "#2b8a3e";
  ctx.fillText(`target ${k}`, s.x(0) + 4, s.y(k) - 4);

  // belief band
  if (bands.length > 0) {
    ctx.fillStyle = "rgba(25, 113, 194, 0.15)";
    ctx.beginPath();
    ctx.moveTo(s.x(0), s.y(0));
    for (const b of bands) ctx.lineTo(s.x(b.step), s.y(b.hi));
    for (const b of [...bands].reverse()) ctx.lineTo(s.x(b.step), s.y(b.lo));
    ctx.lineTo(s.x(0), s.y(0));
    ctx.closePath();
    ctx.fill();

    // belief mean path from the exact zero start
    ctx.strokeStyle = "#1971c2";
    ctx.beginPath();
    ctx.moveTo(s.x(0), s.y(0));
    for (const b of bands) ctx.lineTo(s.x(b.step), s.y(b.mean));
    ctx.stroke();
    for (const b of bands) {
      ctx.fillStyle = "#1971c2";
      ctx.beginPath();
      ctx.arc(s.x(b.step), s.y(b.mean), 3, 0, 2 * Math.PI);
      ctx.fill();
      // observation marker
      ctx.strokeStyle = "#e8590c";
      ctx.beginPath();
      ctx.arc(s.x(b.step), s.y(b.obs), 4, 0, 2 * Math.PI);
      ctx.stroke();
    }
  }

  // axis labels
  ctx.fillStyle = "#555";
  for (let step = 0; step <= session.plan.n; step++) {
    ctx.fillText(String(step), s.x(step) - 3, canvas.height - 6);
  }
  ctx.fillText(yMax.toFixed(1), 4, s.y(yMax) + 8);
  ctx.fillText(yMin.toFixed(1), 4, s.y(yMin));
}

export function drawDensities(canvas: HTMLCanvasElement, session: Session): void {
  const ctx = context2d(canvas);
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const entries = session.history.map((h) => ({ step: h.step, density: h.applied_density }));
  if (session.next_decision) {
    entries.push({
      step: session.history.length + 1,
      density: session.next_decision.recommended_density,
    });
  }
  if (entries.length === 0) return;
  const dMax = Math.max(...entries.map((e) => e.density), 1);
  const s = makeScale(canvas, session.plan.n + 1, 0, dMax * 1.15);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(MARGIN.left, MARGIN.top, canvas.width - MARGIN.left - MARGIN.right,
    canvas.height - MARGIN.top - MARGIN.bottom);
  const barWidth = (canvas.width - MARGIN.left - MARGIN.right) / (session.plan.n + 1) * 0.5;
  for (const e of entries) {
    const committed = e.step <= session.history.length;
    ctx.fillStyle = committed ? "#1971c2" : "rgba(25, 113, 194, 0.35)";
    const x = s.x(e.step) - barWidth / 2;
    ctx.fillRect(x, s.y(e.density), barWidth, s.y(0) - s.y(e.density));
    ctx.fillStyle = "#333";
    ctx.fillText(e.density.toFixed(2), x - 2, s.y(e.density) - 4);
  }
}
