// Client session state. All transitions are driven by server responses;
// the client never computes scores or outcomes on its own.

import { Message, OutcomeView, SessionView, TurnReply } from "./types.js";

export interface ClientState {
  view: SessionView | null;
  draft: string; // free-text draft, retained across rephrase prompts
  rephrase: string | null;
  error: string | null; // schema/network banner
  busy: boolean; // a request is in flight; optimistic updates are forbidden
}

export function initialState(): ClientState {
  return { view: null, draft: "", rephrase: null, error: null, busy: false };
}

export function humanTurnsTaken(state: ClientState): number {
  if (!state.view) return 0;
  return state.view.messages.filter((m) => m.speaker === "you").length;
}

export function applyView(state: ClientState, view: SessionView): ClientState {
  return { ...state, view, error: null };
}

export function applyTurnReply(state: ClientState, reply: TurnReply): ClientState {
  if (!state.view) return state;
  if (!reply.accepted) {
    // turn not consumed; keep the draft so the human can rephrase it
    return { ...state, rephrase: reply.rephrase ?? "please rephrase that offer" };
  }
  const view: SessionView = {
    ...state.view,
    messages: [...state.view.messages, ...reply.new_messages],
    status: reply.status,
    your_turn: reply.your_turn,
    utterances_used: reply.utterances_used,
    outcome: reply.outcome ?? state.view.outcome,
  };
  return { ...state, view, draft: "", rephrase: null };
}

export function applyOutcome(state: ClientState, outcome: OutcomeView): ClientState {
  if (!state.view) return state;
  return {
    ...state,
    view: { ...state.view, status: "closed", your_turn: false, outcome },
  };
}

export function applySurveySubmitted(state: ClientState): ClientState {
  if (!state.view) return state;
  return { ...state, view: { ...state.view, survey_submitted: true } };
}

export function applyServerMessage(state: ClientState, msg: Message): ClientState {
  if (!state.view) return state;
  const last = state.view.messages[state.view.messages.length - 1];
  if (last && last.text === msg.text && last.speaker === msg.speaker) return state;
  return {
    ...state,
    view: { ...state.view, messages: [...state.view.messages, msg] },
  };
}

export function applyError(state: ClientState, error: string): ClientState {
  return { ...state, error };
}

// ── widget gating ─────────────────────────────────────────────────────

export function canSend(state: ClientState): boolean {
  return (
    !state.busy &&
    state.view !== null &&
    state.view.status === "active" &&
    state.view.your_turn
  );
}

export function canWalkaway(state: ClientState): boolean {
  return (
    !state.busy &&
    state.view !== null &&
    state.view.status === "active" &&
    humanTurnsTaken(state) >= 1
  );
}

export function showDealGrid(state: ClientState): boolean {
  return state.view !== null && state.view.status === "awaiting_deal_entry";
}

export function showSurvey(state: ClientState): boolean {
  return (
    state.view !== null &&
    state.view.status === "closed" &&
    !state.view.survey_submitted
  );
}
