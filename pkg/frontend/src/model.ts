import { ApiClient, ApiError } from "./api.js";
import type {
  DecisionKind,
  DecisionView,
  SessionSnapshot,
  WhatIfResponse,
} from "./types.js";

// One label per decision kind, mirrored one-to-one so audit trails stay
// unambiguous.
export const BANNER_LABELS: Record<DecisionKind, string> = {
  continue: "Continue",
  stop_target_reached: "Target reached",
  stop_futility: "Futility",
  stop_at_max: "Resource cap",
};

export interface SessionFormState {
  cilThreshold: string;
  tl: string;
  nMin: string;
  nMax: string;
  priorMu: string;
  priorNScale: string;
  priorVarParam: string;
  priorVScale: string;
  seed: string;
}

// The applied reaction-time preset: target 0.30, tolerance 0.4, futility
// floor 10, cap 50, weakly informative prior.
export const FCW_PRESET: SessionFormState = {
  cilThreshold: "0.30",
  tl: "0.4",
  nMin: "10",
  nMax: "50",
  priorMu: "1.5",
  priorNScale: "5",
  priorVarParam: "0.5",
  priorVScale: "1",
  seed: "",
};

export interface WhatIfState {
  tl: string;
  cilThreshold: string;
  preview: WhatIfResponse | null;
  error: string | null;
  matchesCommitted: boolean;
}

export interface RenderState {
  phase: "setup" | "session";
  form: SessionFormState;
  formErrors: Record<string, string>;
  serviceDown: boolean;
  sessionId: string | null;
  status: "running" | "stopped" | null;
  count: number;
  banner: { kind: DecisionKind; label: string } | null;
  trajectory: [number, number][];
  threshold: number | null;
  fan: {
    atCount: number;
    minimum: number;
    median: number;
    tlPercentile: number;
    maximum: number;
    calibrated: boolean;
  } | null;
  successProb: number | null;
  entryEnabled: boolean;
  entryNotice: string | null;
  entryError: string | null;
  whatIf: WhatIfState & { enabled: boolean; disabledReason: string | null };
  recommendedTlBand: [number, number];
}

const EMPTY_FORM: SessionFormState = {
  cilThreshold: "",
  tl: "",
  nMin: "",
  nMax: "",
  priorMu: "",
  priorNScale: "",
  priorVarParam: "",
  priorVScale: "",
  seed: "",
};

function parseNumber(raw: string): number | null {
  const trimmed = raw.trim();
  if (trimmed === "") return null;
  const value = Number(trimmed);
  return Number.isFinite(value) ? value : null;
}

/** All dashboard behavior, DOM-free: the page and the tests drive this. */
export class DashboardModel {
  form: SessionFormState = { ...EMPTY_FORM };
  formErrors: Record<string, string> = {};
  serviceDown = false;
  session: SessionSnapshot | null = null;
  lastDecision: DecisionView | null = null;
  entryError: string | null = null;
  whatIfTl = "";
  whatIfThreshold = "";
  whatIfPreview: WhatIfResponse | null = null;
  whatIfError: string | null = null;

  constructor(private readonly api: ApiClient) {}

  applyFcwPreset(): void {
    this.form = { ...FCW_PRESET };
    this.formErrors = {};
  }

  setFormField(field: keyof SessionFormState, value: string): void {
    this.form = { ...this.form, [field]: value };
  }

  /** Client-side validation mirroring the service's invariants. */
  validateForm(): Record<string, string> {
    const errors: Record<string, string> = {};
    const threshold = parseNumber(this.form.cilThreshold);
    if (threshold === null || threshold <= 0) errors.cilThreshold = "target CIL must be a positive number";
    const tl = parseNumber(this.form.tl);
    if (tl === null || tl < 0 || tl > 1) errors.tl = "tolerance must lie in [0, 1]";
    const nMin = parseNumber(this.form.nMin);
    const nMax = parseNumber(this.form.nMax);
    if (nMin === null || !Number.isInteger(nMin) || nMin < 1) errors.nMin = "n_min must be a positive integer";
    if (nMax === null || !Number.isInteger(nMax) || nMax < 1) errors.nMax = "n_max must be a positive integer";
    if (!errors.nMin && !errors.nMax && (nMin as number) > (nMax as number)) {
      errors.nMin = "n_min cannot exceed n_max";
    }
    const priorChecks: [keyof SessionFormState, string, (v: number) => boolean][] = [
      ["priorMu", "prior mean must be a number", (v) => Number.isFinite(v)],
      ["priorNScale", "prior mean weight must be positive", (v) => v > 0],
      ["priorVarParam", "prior variance must be positive", (v) => v > 0],
      ["priorVScale", "prior variance weight must be at least 1", (v) => v >= 1],
    ];
    for (const [field, message, ok] of priorChecks) {
      const value = parseNumber(this.form[field]);
      if (value === null || !ok(value)) errors[field] = message;
    }
    if (this.form.seed.trim() !== "") {
      const seed = parseNumber(this.form.seed);
      if (seed === null || !Number.isInteger(seed) || seed < 0) errors.seed = "seed must be a non-negative integer";
    }
    return errors;
  }

  /** POST /sessions; inline errors on validation failure, no state change. */
  async createSession(): Promise<boolean> {
    this.formErrors = this.validateForm();
    if (Object.keys(this.formErrors).length > 0) return false;
    const body: Record<string, unknown> = {
      prior: {
        mu: parseNumber(this.form.priorMu),
        n_scale: parseNumber(this.form.priorNScale),
        var_param: parseNumber(this.form.priorVarParam),
        v_scale: parseNumber(this.form.priorVScale),
      },
      config: {
        cil_threshold: parseNumber(this.form.cilThreshold),
        tl: parseNumber(this.form.tl),
        n_min: parseNumber(this.form.nMin),
        n_max: parseNumber(this.form.nMax),
      },
    };
    if (this.form.seed.trim() !== "") body.seed = parseNumber(this.form.seed);
    try {
      this.session = await this.api.createSession(body);
      this.serviceDown = false;
      this.lastDecision = null;
      this.whatIfTl = this.form.tl;
      this.whatIfThreshold = this.form.cilThreshold;
      this.whatIfPreview = null;
      return true;
    } catch (err) {
      this.absorbError(err, (fieldErrors) => {
        for (const { field, message } of fieldErrors) this.formErrors[field] = message;
      });
      return false;
    }
  }

  /** Parse a free-text observation entry; malformed input never leaves the client. */
  parseObservations(text: string): number[] | null {
    const parts = text
      .split(/[\s,;]+/)
      .map((p) => p.trim())
      .filter((p) => p !== "");
    if (parts.length === 0) {
      this.entryError = "enter at least one number";
      return null;
    }
    const values: number[] = [];
    for (const part of parts) {
      const value = Number(part);
      if (!Number.isFinite(value)) {
        this.entryError = `not a number: "${part}"`;
        return null;
      }
      values.push(value);
    }
    this.entryError = null;
    return values;
  }

  async submitObservations(text: string): Promise<DecisionView | null> {
    if (this.session === null) {
      this.entryError = "no session";
      return null;
    }
    if (this.session.status !== "running") {
      this.entryError = "session is stopped; entries are disabled";
      return null;
    }
    const values = this.parseObservations(text);
    if (values === null) return null;
    try {
      const response = await this.api.addObservations(this.session.id, values);
      this.session = response.session;
      this.lastDecision = response.decision;
      this.whatIfPreview = null;
      return response.decision;
    } catch (err) {
      this.absorbError(err, (fieldErrors) => {
        this.entryError = fieldErrors.map((e) => e.message).join("; ") || "entry rejected";
      });
      return null;
    }
  }

  whatIfAvailable(): { enabled: boolean; reason: string | null } {
    if (this.session === null) return { enabled: false, reason: "no session" };
    if (this.session.prediction === null) {
      return {
        enabled: false,
        reason: `no prediction yet: futility checks start at n_min = ${this.session.config.n_min}`,
      };
    }
    return { enabled: true, reason: null };
  }

  /** POST /what-if with the panel's overrides; never mutates the session. */
  async previewWhatIf(): Promise<WhatIfResponse | null> {
    const availability = this.whatIfAvailable();
    if (!availability.enabled || this.session === null) {
      this.whatIfError = availability.reason;
      return null;
    }
    const tl = parseNumber(this.whatIfTl);
    if (tl === null || tl < 0 || tl > 1) {
      this.whatIfError = "tolerance must lie in [0, 1]";
      return null;
    }
    const threshold = parseNumber(this.whatIfThreshold);
    if (threshold === null || threshold <= 0) {
      this.whatIfError = "threshold must be positive";
      return null;
    }
    try {
      this.whatIfPreview = await this.api.whatIf(this.session.id, {
        tl,
        cil_threshold: threshold,
      });
      this.whatIfError = null;
      return this.whatIfPreview;
    } catch (err) {
      this.absorbError(err, (fieldErrors) => {
        this.whatIfError = fieldErrors.map((e) => e.message).join("; ") || "preview failed";
      });
      return null;
    }
  }

  renderState(): RenderState {
    const session = this.session;
    const decision = this.lastDecision ?? session?.decision ?? null;
    const prediction = session?.prediction ?? null;
    const committedTl = session === null ? null : session.config.tl;
    const committedThreshold = session === null ? null : session.config.cil_threshold;
    const matchesCommitted =
      this.whatIfPreview !== null &&
      committedTl !== null &&
      committedThreshold !== null &&
      this.whatIfPreview.tl === committedTl &&
      this.whatIfPreview.cil_threshold === committedThreshold;
    const availability = this.whatIfAvailable();
    const belowFloor =
      session !== null && session.status === "running" && session.count < session.config.n_min;
    return {
      phase: session === null ? "setup" : "session",
      form: this.form,
      formErrors: this.formErrors,
      serviceDown: this.serviceDown,
      sessionId: session?.id ?? null,
      status: session?.status ?? null,
      count: session?.count ?? 0,
      banner:
        decision === null
          ? session === null
            ? null
            : { kind: "continue", label: BANNER_LABELS.continue }
          : { kind: decision.kind, label: BANNER_LABELS[decision.kind] },
      trajectory: session?.trajectory ?? [],
      threshold: committedThreshold,
      fan:
        prediction === null
          ? null
          : {
              atCount: prediction.at_count,
              minimum: prediction.minimum,
              median: prediction.median,
              tlPercentile: prediction.tl_percentile,
              maximum: prediction.maximum,
              calibrated: prediction.calibrated,
            },
      successProb: prediction?.success_prob ?? null,
      entryEnabled: session !== null && session.status === "running",
      entryNotice: belowFloor
        ? `futility check inactive until n_min = ${session!.config.n_min} samples`
        : null,
      entryError: this.entryError,
      whatIf: {
        tl: this.whatIfTl,
        cilThreshold: this.whatIfThreshold,
        preview: this.whatIfPreview,
        error: this.whatIfError,
        matchesCommitted,
        enabled: availability.enabled,
        disabledReason: availability.reason,
      },
      recommendedTlBand: [0.2, 0.6],
    };
  }

  private absorbError(err: unknown, onFields: (errors: { field: string; message: string }[]) => void): void {
    if (err instanceof ApiError) {
      if (err.errors.length > 0) onFields(err.errors);
      else onFields([{ field: "", message: err.message }]);
      return;
    }
    this.serviceDown = true;
  }
}
