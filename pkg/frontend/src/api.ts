import {
  ActPayload,
  AgentInfo,
  OutcomeView,
  SessionView,
  SurveyRequest,
  TurnReply,
  validateSessionView,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = `${resp.status} ${resp.statusText}`;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      /* non-JSON error body; keep the status line */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

/** Thin typed client over the arena REST API. One instance per tab. */
export class ArenaClient {
  constructor(
    private base: string,
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return unwrap<T>(resp);
  }

  async listAgents(): Promise<AgentInfo[]> {
    return unwrap(await this.fetchFn(this.base + "/api/agents"));
  }

  async createSession(agentId = "random", seed?: number): Promise<SessionView> {
    const body: Record<string, unknown> = { agent_id: agentId };
    if (seed !== undefined) body.seed = seed;
    return validateSessionView(await this.post("/api/sessions", body));
  }

  async getSession(sessionId: string): Promise<SessionView> {
    return validateSessionView(
      await unwrap(await this.fetchFn(`${this.base}/api/sessions/${sessionId}`)),
    );
  }

  async sendText(sessionId: string, text: string): Promise<TurnReply> {
    return this.post(`/api/sessions/${sessionId}/turns`, { text });
  }

  async sendAct(sessionId: string, act: ActPayload): Promise<TurnReply> {
    return this.post(`/api/sessions/${sessionId}/turns`, { act });
  }

  async submitDeal(sessionId: string, take: number[]): Promise<OutcomeView> {
    return this.post(`/api/sessions/${sessionId}/deal`, { take });
  }

  async walkaway(sessionId: string): Promise<OutcomeView> {
    return this.post(`/api/sessions/${sessionId}/walkaway`, {});
  }

  async submitSurvey(sessionId: string, survey: SurveyRequest): Promise<void> {
    await this.post(`/api/sessions/${sessionId}/survey`, survey);
  }

  /** Server-sent events for turn push; falls back to polling if EventSource
   * is unavailable (tests, old browsers). */
  openEvents(sessionId: string, onEvent: (data: unknown) => void): () => void {
    if (typeof EventSource !== "undefined") {
      const source = new EventSource(
        `${this.base}/api/sessions/${sessionId}/events?wait=true`,
      );
      source.onmessage = (ev) => {
        try {
          onEvent(JSON.parse(ev.data));
        } catch {
          /* keepalive or partial frame */
        }
      };
      return () => source.close();
    }
    const timer = setInterval(async () => {
      try {
        onEvent(await this.getSession(sessionId));
      } catch {
        /* transient; next poll retries */
      }
    }, 1500);
    return () => clearInterval(timer);
  }
}
