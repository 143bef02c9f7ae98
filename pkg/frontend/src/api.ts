// Typed client for the local session service. All numbers shown in the UI
// come from these payloads verbatim; the client never recomputes filter or
// control quantities.

export interface ProcessModel {
  alpha: number;
  beta: number;
  sigma_p: number;
  sigma_o: number;
}

export interface BuildPlan {
  n: number;
  target_k: number;
  repetitions: number;
  d_min?: number;
  d_max?: number;
  density_increment?: number | null;
}

export interface Belief {
  step: number;
  mean: number;
  variance: number;
}

export interface ControlDecision {
  recommended_density: number;
  clamped: boolean;
  unclamped_density: number;
  predicted_final_mean: number;
  predicted_final_sd: number;
}

export interface HistoryEntry {
  step: number;
  applied_density: number;
  raw_measurements: number[];
  averaged_observation: number;
  repetitions: number;
  belief_after: Belief;
  decision: ControlDecision;
}

export interface Session {
  id: string;
  created_at: number;
  plan: BuildPlan;
  model: ProcessModel;
  belief: Belief;
  history: HistoryEntry[];
  status: "awaiting_print" | "awaiting_measurement" | "complete";
  next_decision: ControlDecision | null;
  next_applied_density: number | null;
  final_abs_error_pct: number | null;
}

export interface SessionSummary {
  id: string;
  created_at: number;
  status: string;
  steps_done: number;
  n: number;
  target_k: number;
  final_abs_error_pct: number | null;
}

export interface ModelFile {
  name: string;
  model: ProcessModel;
}

export interface MeasurementBody {
  values?: number[];
  bending?: number[][][];
  repetitions?: number;
  applied_density?: number;
}

export class ApiError extends Error {
  constructor(public code: string, message: string) {
    super(message);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => null);
  if (!resp.ok) {
    const err = body && body.error ? body.error : { code: `HTTP${resp.status}`, message: resp.statusText };
    throw new ApiError(err.code, err.message);
  }
  return body as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  listSessions(): Promise<SessionSummary[]> {
    return fetch(`${this.base}/api/sessions`).then((r) => parse<SessionSummary[]>(r));
  }

  getSession(id: string): Promise<Session> {
    return fetch(`${this.base}/api/sessions/${id}`).then((r) => parse<Session>(r));
  }

  createSession(plan: BuildPlan, model: ProcessModel | null, modelName: string | null): Promise<Session> {
    const body: Record<string, unknown> = { plan };
    if (model) body.model = model;
    if (modelName) body.model_name = modelName;
    return fetch(`${this.base}/api/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => parse<Session>(r));
  }

  recordMeasurement(id: string, body: MeasurementBody): Promise<Session> {
    return fetch(`${this.base}/api/sessions/${id}/measurements`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => parse<Session>(r));
  }

  overrideDensity(id: string, applied: number): Promise<Session> {
    return fetch(`${this.base}/api/sessions/${id}/override-density`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ applied }),
    }).then((r) => parse<Session>(r));
  }

  deleteSession(id: string): Promise<void> {
    return fetch(`${this.base}/api/sessions/${id}`, { method: "DELETE" }).then((r) =>
      parse<void>(r),
    );
  }

  listModels(): Promise<ModelFile[]> {
    return fetch(`${this.base}/api/models`).then((r) => parse<ModelFile[]>(r));
  }

  getTrace(id: string): Promise<unknown> {
    return fetch(`${this.base}/api/sessions/${id}/trace`).then((r) => parse<unknown>(r));
  }
}
