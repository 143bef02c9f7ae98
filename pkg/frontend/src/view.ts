// Display-only derivations of a Session payload: progress, the belief band
// shown on the chart, and distance to target. Everything else renders the
// service numbers as-is.

import type { Session } from "./api";

export interface SessionView {
  session: Session;
  progress: string; // "i/n"
  stepsDone: number;
  beliefBandLow: number;
  beliefBandHigh: number;
  errorToTarget: number | null; // kg/mm, belief mean minus target
}

export function deriveView(session: Session): SessionView {
  const halfWidth = 2 * Math.sqrt(session.belief.variance);
  return {
    session,
    stepsDone: session.history.length,
    progress: `${session.history.length}/${session.plan.n}`,
    beliefBandLow: session.belief.mean - halfWidth,
    beliefBandHigh: session.belief.mean + halfWidth,
    errorToTarget:
      session.history.length === 0 ? null : session.belief.mean - session.plan.target_k,
  };
}

export type MeasurementInput =
  | { kind: "values"; values: number[] }
  | { kind: "bending"; sets: number[][][] }
  | { kind: "empty" }
  | { kind: "invalid"; message: string };

// Measurement entry accepts either stiffness readings (numbers separated by
// spaces/commas/newlines) or pasted load-deflection pairs: two numbers per
// line, blank lines separating repeated trials.
export function parseMeasurementText(text: string): MeasurementInput {
  const trimmed = text.trim();
  if (!trimmed) return { kind: "empty" };
  const lines = trimmed.split(/\n/).map((l) => l.trim());
  const rows: number[][] = [];
  for (const line of lines) {
    if (!line) {
      rows.push([]);
      continue;
    }
    const parts = line.split(/[\s,;]+/).filter((p) => p.length > 0);
    const numbers = parts.map(Number);
    if (numbers.some((x) => !Number.isFinite(x))) {
      return { kind: "invalid", message: `not a number: "${line}"` };
    }
    rows.push(numbers);
  }
  const nonEmpty = rows.filter((r) => r.length > 0);
  if (nonEmpty.every((r) => r.length === 2) && nonEmpty.length >= 2) {
    // load-deflection pairs; blank lines split trials
    const sets: number[][][] = [];
    let current: number[][] = [];
    for (const row of rows) {
      if (row.length === 0) {
        if (current.length) sets.push(current);
        current = [];
      } else {
        current.push([row[0], row[1]]);
      }
    }
    if (current.length) sets.push(current);
    if (sets.some((s) => s.length < 2)) {
      return { kind: "invalid", message: "each load-deflection trial needs at least 2 points" };
    }
    return { kind: "bending", sets };
  }
  return { kind: "values", values: nonEmpty.flat() };
}

export function traceToCsv(trace: {
  steps: {
    step: number;
    applied_density: number;
    observed_stiffness: number | null;
    true_stiffness: number | null;
    belief_after: { mean: number; variance: number } | null;
  }[];
}): string {
  const lines = [
    "step,applied_density,observed_stiffness,true_stiffness,belief_mean,belief_variance",
  ];
  for (const s of trace.steps) {
    lines.push(
      [
        s.step,
        s.applied_density,
        s.observed_stiffness ?? "",
        s.true_stiffness ?? "",
        s.belief_after ? s.belief_after.mean : "",
        s.belief_after ? s.belief_after.variance : "",
      ].join(","),
    );
  }
  return lines.join("\n") + "\n";
}
