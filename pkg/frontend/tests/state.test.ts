import { describe, expect, it } from "vitest";

import {
  applyOutcome,
  applyServerMessage,
  applySurveySubmitted,
  applyTurnReply,
  applyView,
  canSend,
  canWalkaway,
  humanTurnsTaken,
  initialState,
  showDealGrid,
  showSurvey,
} from "../src/state.js";
import { SessionView, TurnReply } from "../src/types.js";

function view(overrides: Partial<SessionView> = {}): SessionView {
  return {
    session_id: "s1",
    agent_id: "M[r=selfish,p=selfish]",
    counts: [2, 1, 3],
    your_values: [1, 2, 2],
    your_role: "A",
    status: "active",
    your_turn: true,
    cutoff: 20,
    utterances_used: 0,
    messages: [],
    outcome: null,
    survey_submitted: false,
    ...overrides,
  };
}

describe("widget gating", () => {
  it("disables everything before a session exists", () => {
    const s = initialState();
    expect(canSend(s)).toBe(false);
    expect(canWalkaway(s)).toBe(false);
    expect(showDealGrid(s)).toBe(false);
    expect(showSurvey(s)).toBe(false);
  });

  it("walkaway stays disabled until the human has taken a turn", () => {
    let s = applyView(initialState(), view());
    expect(canSend(s)).toBe(true);
    expect(canWalkaway(s)).toBe(false);
    s = applyView(
      s,
      view({
        messages: [{ speaker: "you", text: "i want everything", kind: "propose", take: [2, 1, 3] }],
        utterances_used: 1,
      }),
    );
    expect(humanTurnsTaken(s)).toBe(1);
    expect(canWalkaway(s)).toBe(true);
  });

  it("sending is blocked off-turn and while a request is in flight", () => {
    let s = applyView(initialState(), view({ your_turn: false }));
    expect(canSend(s)).toBe(false);
    s = { ...applyView(initialState(), view()), busy: true };
    expect(canSend(s)).toBe(false);
  });

  it("deal grid appears only in awaiting_deal_entry", () => {
    const active = applyView(initialState(), view());
    const awaiting = applyView(initialState(), view({ status: "awaiting_deal_entry" }));
    expect(showDealGrid(active)).toBe(false);
    expect(showDealGrid(awaiting)).toBe(true);
    expect(canWalkaway(awaiting)).toBe(false); // not active any more
  });

  it("survey shows exactly until submitted", () => {
    let s = applyView(
      initialState(),
      view({
        status: "closed",
        outcome: { kind: "walkaway", your_points: 0, agent_points: 0, needs_review: false },
      }),
    );
    expect(showSurvey(s)).toBe(true);
    s = applySurveySubmitted(s);
    expect(showSurvey(s)).toBe(false);
  });
});

describe("turn replies", () => {
  const accepted: TurnReply = {
    accepted: true,
    rephrase: null,
    new_messages: [
      { speaker: "you", text: "i want 2 books", kind: "propose", take: [2, 0, 0] },
      { speaker: "agent", text: "deal", kind: "accept", take: null },
    ],
    status: "active",
    your_turn: true,
    utterances_used: 2,
    outcome: null,
  };

  it("appends accepted messages and clears the draft", () => {
    let s = { ...applyView(initialState(), view()), draft: "i want 2 books" };
    s = applyTurnReply(s, accepted);
    expect(s.view!.messages).toHaveLength(2);
    expect(s.view!.utterances_used).toBe(2);
    expect(s.draft).toBe("");
    expect(s.rephrase).toBeNull();
  });

  it("a rephrase keeps the draft and consumes nothing", () => {
    let s = { ...applyView(initialState(), view()), draft: "gribble florp" };
    s = applyTurnReply(s, {
      accepted: false,
      rephrase: "no offer content recognized",
      new_messages: [],
      status: "active",
      your_turn: true,
      utterances_used: 0,
      outcome: null,
    });
    expect(s.draft).toBe("gribble florp");
    expect(s.rephrase).toMatch(/no offer/);
    expect(s.view!.messages).toHaveLength(0);
  });

  it("outcomes close the session without client-side scoring", () => {
    let s = applyView(initialState(), view());
    s = applyOutcome(s, { kind: "agreement", your_points: 8, agent_points: 2, needs_review: false });
    expect(s.view!.status).toBe("closed");
    expect(s.view!.outcome!.your_points).toBe(8);
    expect(canSend(s)).toBe(false);
  });

  it("event-pushed messages deduplicate against the tail", () => {
    let s = applyView(initialState(), view());
    const msg = { speaker: "agent" as const, text: "deal", kind: "accept", take: null };
    s = applyServerMessage(s, msg);
    s = applyServerMessage(s, msg);
    expect(s.view!.messages).toHaveLength(1);
  });
});
