/**
 * Thin typed client for the recommendation service HTTP API.
 *
 * Endpoints are consumed verbatim; every number shown in the UI comes out
 * of one of these responses.
 */

/** One goal row from GET /goals. */
export interface GoalInfo {
  goal: number;
  label: string;
  preview: string[];
}

/** One recommended data command with its model probability. */
export interface Recommendation {
  cmd: string;
  p: number;
}

export interface StartSessionResponse {
  session: string;
  recommendations: Recommendation[];
}

export interface CommandResponse {
  recommendations: Recommendation[];
  window_len: number;
}

/** Service-reported failure; code 0 means the service was unreachable. */
export class ApiError extends Error {
  readonly code: number;

  constructor(message: string, code: number) {
    super(message);
    this.name = "ApiError";
    this.code = code;
  }
}

export class ServiceClient {
  private baseUrl: string;

  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  getGoals(): Promise<GoalInfo[]> {
    return this.request<GoalInfo[]>("GET", "/goals");
  }

  startSession(goal: number): Promise<StartSessionResponse> {
    return this.request<StartSessionResponse>("POST", "/sessions", { goal });
  }

  sendCommand(session: string, cmd: string): Promise<CommandResponse> {
    const path = `/sessions/${encodeURIComponent(session)}/commands`;
    return this.request<CommandResponse>("POST", path, { cmd });
  }

  async endSession(session: string): Promise<void> {
    await this.request<unknown>("DELETE", `/sessions/${encodeURIComponent(session)}`);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`, 0);
    }
    const text = await resp.text();
    let data: unknown = null;
    if (text) {
      try {
        data = JSON.parse(text);
      } catch {
        data = null;
      }
    }
    if (!resp.ok) {
      const payload = data as { error?: string; code?: number } | null;
      throw new ApiError(payload?.error ?? `http ${resp.status}`, payload?.code ?? resp.status);
    }
    return data as T;
  }
}
