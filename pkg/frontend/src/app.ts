// Operator console wiring. The page is a thin state renderer: UI state is
// always a function of the last fetched Session, and every number displayed
// is taken from the service payload (see view.ts for the only derivations).

import { ApiClient, ApiError, ModelFile, Session } from "./api";
import { drawConvergence, drawDensities } from "./chart";
import { deriveView, parseMeasurementText, traceToCsv } from "./view";

function el<T extends HTMLElement>(doc: Document, id: string): T {
  const node = doc.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class App {
  readonly api: ApiClient;
  private doc: Document;
  current: Session | null = null;
  private models: ModelFile[] = [];
  // last button-triggered action, awaitable by scripted tests
  pending: Promise<void> = Promise.resolve();

  constructor(doc: Document, base = "") {
    this.doc = doc;
    this.api = new ApiClient(base);
    const track = (action: () => Promise<void>) => () => {
      // button actions own their inline error boxes; this catch covers
      // network-level failures of refresh/export
      this.pending = action().catch((e) => {
        el<HTMLElement>(doc, "wizard-error").textContent =
          e instanceof ApiError ? `${e.code}: ${e.message}` : String(e);
      });
    };
    el<HTMLButtonElement>(doc, "wizard-create").addEventListener(
      "click", track(() => this.createSession()));
    el<HTMLButtonElement>(doc, "measure-submit").addEventListener(
      "click", track(() => this.submitMeasurement()));
    el<HTMLButtonElement>(doc, "refresh").addEventListener(
      "click", track(() => this.refresh()));
    el<HTMLButtonElement>(doc, "export-json").addEventListener(
      "click", track(() => this.exportTrace("json")));
    el<HTMLButtonElement>(doc, "export-csv").addEventListener(
      "click", track(() => this.exportTrace("csv")));
  }

  async start(): Promise<void> {
    await this.loadModels();
    await this.renderSessionList();
  }

  async loadModels(): Promise<void> {
    const select = el<HTMLSelectElement>(this.doc, "wizard-model");
    try {
      this.models = await this.api.listModels();
    } catch {
      this.models = [];
    }
    select.innerHTML = "";
    for (const m of this.models) {
      const option = this.doc.createElement("option");
      option.value = m.name;
      option.textContent = `${m.name} (alpha ${m.model.alpha}, beta ${m.model.beta})`;
      select.appendChild(option);
    }
    const manual = this.doc.createElement("option");
    manual.value = "";
    manual.textContent = "paste model JSON below";
    select.appendChild(manual);
  }

  async createSession(): Promise<void> {
    const doc = this.doc;
    const errBox = el<HTMLElement>(doc, "wizard-error");
    errBox.textContent = "";
    const n = parseInt(el<HTMLInputElement>(doc, "wizard-n").value, 10);
    const k = parseFloat(el<HTMLInputElement>(doc, "wizard-k").value);
    const r = parseInt(el<HTMLInputElement>(doc, "wizard-r").value, 10);
    if (!Number.isFinite(n) || n < 1 || !Number.isFinite(k) || k <= 0 || !Number.isFinite(r) || r < 1) {
      errBox.textContent = "need a leaf count >= 1, a positive target, and repetitions >= 1";
      return; // invalid form: no request
    }
    const modelName = el<HTMLSelectElement>(doc, "wizard-model").value || null;
    let model = null;
    if (!modelName) {
      const raw = el<HTMLTextAreaElement>(doc, "wizard-model-json").value.trim();
      if (!raw) {
        errBox.textContent = "pick a model file or paste model JSON";
        return;
      }
      try {
        model = JSON.parse(raw);
      } catch {
        errBox.textContent = "model JSON does not parse";
        return;
      }
    }
    try {
      const session = await this.api.createSession(
        { n, target_k: k, repetitions: r },
        model,
        modelName,
      );
      this.current = session;
      this.render();
      await this.renderSessionList();
    } catch (e) {
      errBox.textContent = e instanceof ApiError ? `${e.code}: ${e.message}` : String(e);
    }
  }

  async submitMeasurement(): Promise<void> {
    const doc = this.doc;
    const errBox = el<HTMLElement>(doc, "measure-error");
    errBox.textContent = "";
    if (!this.current) return;
    const parsed = parseMeasurementText(el<HTMLTextAreaElement>(doc, "measure-input").value);
    if (parsed.kind === "empty") {
      errBox.textContent = "enter at least one stiffness value";
      return; // inline validation, no request sent
    }
    if (parsed.kind === "invalid") {
      errBox.textContent = parsed.message;
      return;
    }
    const body =
      parsed.kind === "values" ? { values: parsed.values } : { bending: parsed.sets };
    try {
      const session = await this.api.recordMeasurement(this.current.id, body);
      this.current = session;
      el<HTMLTextAreaElement>(doc, "measure-input").value = "";
      this.render();
      await this.renderSessionList();
    } catch (e) {
      errBox.textContent = e instanceof ApiError ? `${e.code}: ${e.message}` : String(e);
    }
  }

  async refresh(): Promise<void> {
    if (this.current) {
      this.current = await this.api.getSession(this.current.id);
      this.render();
    }
    await this.renderSessionList();
  }

  async open(id: string): Promise<void> {
    this.current = await this.api.getSession(id);
    this.render();
  }

  async exportTrace(format: "json" | "csv"): Promise<void> {
    if (!this.current) return;
    const trace = await this.api.getTrace(this.current.id);
    const text =
      format === "json" ? JSON.stringify(trace, null, 2) + "\n" : traceToCsv(trace as never);
    const mime = format === "json" ? "application/json" : "text/csv";
    const link = el<HTMLAnchorElement>(this.doc, "export-link");
    link.href = `data:${mime};charset=utf-8,${encodeURIComponent(text)}`;
    link.download = `session-${this.current.id}.${format}`;
    link.textContent = `download session-${this.current.id}.${format}`;
    link.click();
  }

  async renderSessionList(): Promise<void> {
    const list = el<HTMLUListElement>(this.doc, "session-list");
    const sessions = await this.api.listSessions();
    list.innerHTML = "";
    for (const s of sessions) {
      const li = this.doc.createElement("li");
      const err =
        s.final_abs_error_pct === null ? "" : `, error ${s.final_abs_error_pct.toFixed(2)} %`;
      li.textContent = `${s.id}: ${s.steps_done}/${s.n} toward ${s.target_k} kg/mm (${s.status}${err})`;
      li.addEventListener("click", () => {
        this.pending = this.open(s.id).catch((e) => {
          el<HTMLElement>(this.doc, "wizard-error").textContent =
            e instanceof ApiError ? `${e.code}: ${e.message}` : String(e);
        });
      });
      list.appendChild(li);
    }
  }

  render(): void {
    const doc = this.doc;
    const session = this.current;
    el<HTMLElement>(doc, "panel").hidden = session === null;
    if (!session) return;
    const view = deriveView(session);
    el<HTMLElement>(doc, "session-id").textContent = session.id;
    el<HTMLElement>(doc, "status").textContent = session.status;
    el<HTMLElement>(doc, "progress").textContent = view.progress;
    el<HTMLElement>(doc, "target").textContent =
      `${session.plan.target_k} kg/mm over ${session.plan.n} leaves, r=${session.plan.repetitions}`;

    const decision = session.next_decision;
    el<HTMLElement>(doc, "next-density").textContent =
      decision === null ? "-" : decision.recommended_density.toFixed(3);
    el<HTMLElement>(doc, "clamped-flag").textContent =
      decision !== null && decision.clamped ? "(clamped)" : "";
    el<HTMLElement>(doc, "predicted-final").textContent =
      decision === null
        ? "-"
        : `${decision.predicted_final_mean.toFixed(3)} +/- ${decision.predicted_final_sd.toFixed(3)}`;

    el<HTMLElement>(doc, "belief-mean").textContent = session.belief.mean.toFixed(4);
    el<HTMLElement>(doc, "belief-band").textContent =
      `[${view.beliefBandLow.toFixed(4)}, ${view.beliefBandHigh.toFixed(4)}]`;
    el<HTMLElement>(doc, "error-to-target").textContent =
      view.errorToTarget === null ? "-" : `${view.errorToTarget >= 0 ? "+" : ""}${view.errorToTarget.toFixed(4)}`;

    const badge = el<HTMLElement>(doc, "final-error-badge");
    if (session.final_abs_error_pct !== null) {
      badge.hidden = false;
      badge.textContent = `final error ${session.final_abs_error_pct.toFixed(2)} % of target`;
    } else {
      badge.hidden = true;
      badge.textContent = "";
    }
    el<HTMLElement>(doc, "measure-block").hidden = session.status === "complete";

    drawConvergence(el<HTMLCanvasElement>(doc, "chart-convergence"), session);
    drawDensities(el<HTMLCanvasElement>(doc, "chart-densities"), session);
  }
}

export function createApp(doc: Document, base = ""): App {
  return new App(doc, base);
}
