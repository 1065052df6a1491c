import type {
  FieldError,
  ObservationResponse,
  SessionSnapshot,
  WhatIfResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errors: FieldError[],
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin JSON client for the session service. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload: unknown = await response.json();
    if (!response.ok) {
      const record = payload as { errors?: FieldError[]; error?: string };
      const errors = record.errors ?? [];
      const message =
        record.error ??
        (errors.length > 0
          ? errors.map((e) => `${e.field}: ${e.message}`).join("; ")
          : `request failed with status ${response.status}`);
      throw new ApiError(response.status, errors, message);
    }
    return payload as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/healthz");
  }

  createSession(body: unknown): Promise<SessionSnapshot> {
    return this.request("POST", "/sessions", body);
  }

  getSession(id: string): Promise<SessionSnapshot> {
    return this.request("GET", `/sessions/${id}`);
  }

  listSessions(): Promise<{ sessions: { id: string; status: string; count: number }[] }> {
    return this.request("GET", "/sessions");
  }

  addObservations(id: string, values: number[]): Promise<ObservationResponse> {
    return this.request("POST", `/sessions/${id}/observations`, { values });
  }

  whatIf(
    id: string,
    overrides: { tl?: number; cil_threshold?: number },
  ): Promise<WhatIfResponse> {
    return this.request("POST", `/sessions/${id}/what-if`, overrides);
  }
}
