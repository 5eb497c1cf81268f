// Payload shapes of the arena HTTP API. These mirror the server schemas;
// the session payloads never carry the agent's values.

export type SessionStatus = "active" | "awaiting_deal_entry" | "closed";
export type OutcomeKind = "agreement" | "walkaway" | "cutoff" | "mismatch";
export type ActKind = "propose" | "accept" | "select" | "walkaway";

export interface Message {
  speaker: "you" | "agent";
  text: string;
  kind: string;
  take: number[] | null;
}

export interface OutcomeView {
  kind: OutcomeKind;
  your_points: number;
  agent_points: number;
  needs_review: boolean;
}

export interface SessionView {
  session_id: string;
  agent_id: string;
  counts: number[];
  your_values: number[];
  your_role: "A" | "B";
  status: SessionStatus;
  your_turn: boolean;
  cutoff: number;
  utterances_used: number;
  messages: Message[];
  outcome: OutcomeView | null;
  survey_submitted: boolean;
}

export interface ActPayload {
  kind: ActKind;
  take?: number[] | null;
}

export interface TurnReply {
  accepted: boolean;
  rephrase: string | null;
  new_messages: Message[];
  status: SessionStatus;
  your_turn: boolean;
  utterances_used: number;
  outcome: OutcomeView | null;
}

export interface SurveyRequest {
  satisfaction: number;
  likeness: number;
  comments?: string;
}

export interface AgentInfo {
  agent_id: string;
  stage: number | null;
  reward: string | null;
  partner: string | null;
}

const SESSION_KEYS = ["session_id", "counts", "your_values", "status", "messages"];

/** Guard against a server/client schema drift: every key we depend on must
 * exist, and no agent-value field may ever appear. */
export function validateSessionView(body: unknown): SessionView {
  const obj = body as Record<string, unknown>;
  for (const key of SESSION_KEYS) {
    if (!(key in obj)) {
      throw new Error(`schema mismatch: session payload is missing '${key}'`);
    }
  }
  if ("values_a" in obj || "values_b" in obj || "agent_values" in obj) {
    throw new Error("schema violation: agent values present in a session payload");
  }
  return body as SessionView;
}
