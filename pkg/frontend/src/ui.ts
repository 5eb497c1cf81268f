// DOM rendering and event wiring. Controls stay disabled unless the state
// gating says otherwise; every action awaits the server acknowledgment.

import { ArenaClient, ApiError } from "./api.js";
import {
  ISSUE_NAMES,
  StepperModel,
  describeTake,
  newSteppers,
  proposePayload,
  step,
} from "./composer.js";
import {
  ClientState,
  applyError,
  applyOutcome,
  applySurveySubmitted,
  applyTurnReply,
  applyView,
  canSend,
  canWalkaway,
  humanTurnsTaken,
  initialState,
  showDealGrid,
  showSurvey,
} from "./state.js";
import {
  LIKENESS_ANCHORS,
  SATISFACTION_ANCHORS,
  SurveyModel,
  emptySurvey,
  isComplete,
  surveyPayload,
} from "./survey.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

export class ArenaApp {
  private state: ClientState = initialState();
  private composer: StepperModel = newSteppers([0, 0, 0]);
  private dealGrid: StepperModel = newSteppers([0, 0, 0]);
  private survey: SurveyModel = emptySurvey();
  private closeEvents: (() => void) | null = null;

  constructor(private client: ArenaClient, private root: HTMLElement) {}

  async start(agentId = "random"): Promise<void> {
    try {
      const view = await this.client.createSession(agentId);
      this.state = applyView(this.state, view);
      this.composer = newSteppers(view.counts);
      this.dealGrid = newSteppers(view.counts);
      this.closeEvents = this.client.openEvents(view.session_id, () => {
        void this.refresh();
      });
    } catch (e) {
      this.state = applyError(this.state, this.describe(e));
    }
    this.render();
  }

  private describe(e: unknown): string {
    if (e instanceof ApiError) return e.message;
    if (e instanceof Error) return e.message;
    return String(e);
  }

  private async refresh(): Promise<void> {
    const view = this.state.view;
    if (!view) return;
    try {
      this.state = applyView(this.state, await this.client.getSession(view.session_id));
    } catch (e) {
      this.state = applyError(this.state, this.describe(e));
    }
    this.render();
  }

  private async act(run: () => Promise<void>): Promise<void> {
    this.state = { ...this.state, busy: true };
    this.render();
    try {
      await run();
    } catch (e) {
      this.state = applyError(this.state, this.describe(e));
    }
    this.state = { ...this.state, busy: false };
    this.render();
  }

  private sendText(): Promise<void> {
    return this.act(async () => {
      const view = this.state.view;
      if (!view || !canSend(this.state)) return;
      const text = this.state.draft.trim();
      if (!text) return;
      const reply = await this.client.sendText(view.session_id, text);
      this.state = applyTurnReply(this.state, reply);
    });
  }

  private sendComposer(): Promise<void> {
    return this.act(async () => {
      const view = this.state.view;
      if (!view || !canSend(this.state)) return;
      const reply = await this.client.sendAct(view.session_id, proposePayload(this.composer));
      this.state = applyTurnReply(this.state, reply);
    });
  }

  private sendAccept(): Promise<void> {
    return this.act(async () => {
      const view = this.state.view;
      if (!view || !canSend(this.state)) return;
      const reply = await this.client.sendAct(view.session_id, { kind: "accept" });
      this.state = applyTurnReply(this.state, reply);
    });
  }

  private sendSelect(): Promise<void> {
    return this.act(async () => {
      const view = this.state.view;
      if (!view || !canSend(this.state)) return;
      const reply = await this.client.sendAct(view.session_id, { kind: "select" });
      this.state = applyTurnReply(this.state, reply);
    });
  }

  private doWalkaway(): Promise<void> {
    return this.act(async () => {
      const view = this.state.view;
      if (!view || !canWalkaway(this.state)) return;
      const outcome = await this.client.walkaway(view.session_id);
      this.state = applyOutcome(this.state, outcome);
    });
  }

  private submitDeal(): Promise<void> {
    return this.act(async () => {
      const view = this.state.view;
      if (!view || !showDealGrid(this.state)) return;
      const outcome = await this.client.submitDeal(view.session_id, this.dealGrid.take);
      this.state = applyOutcome(this.state, outcome);
    });
  }

  private submitSurvey(): Promise<void> {
    return this.act(async () => {
      const view = this.state.view;
      if (!view || !showSurvey(this.state) || !isComplete(this.survey)) return;
      await this.client.submitSurvey(view.session_id, surveyPayload(this.survey));
      this.state = applySurveySubmitted(this.state);
    });
  }

  // ── rendering ─────────────────────────────────────────────────────

  render(): void {
    const view = this.state.view;
    this.root.replaceChildren();
    if (this.state.error) {
      this.root.append(el("div", { class: "banner error" }, this.state.error));
    }
    if (!view) {
      this.root.append(el("p", {}, "starting a session..."));
      return;
    }
    this.root.append(
      el(
        "div",
        { class: "layout" },
        this.renderScenarioPanel(view.counts, view.your_values, view),
        this.renderChat(view),
      ),
    );
  }

  private renderScenarioPanel(counts: number[], values: number[], view: {
    status: string;
    cutoff: number;
    utterances_used: number;
  }): HTMLElement {
    const rows = ISSUE_NAMES.map((name, k) =>
      el(
        "tr",
        {},
        el("td", {}, name),
        el("td", { class: "num" }, String(counts[k])),
        el("td", { class: "num" }, String(values[k])),
      ),
    );
    const panel = el(
      "div",
      { class: "panel scenario" },
      el("h2", {}, "your items and values"),
      el(
        "table",
        {},
        el("tr", {}, el("th", {}, "item"), el("th", {}, "count"), el("th", {}, "your value")),
        ...rows,
      ),
      el(
        "p",
        { class: "muted" },
        `utterances: ${view.utterances_used}/${view.cutoff} — status: ${view.status}`,
      ),
    );
    if (showDealGrid(this.state)) panel.append(this.renderDealGrid());
    if (showSurvey(this.state)) panel.append(this.renderSurvey());
    if (this.state.view?.outcome) panel.append(this.renderOutcome());
    return panel;
  }

  private renderChat(view: { messages: { speaker: string; text: string }[] }): HTMLElement {
    const log = el("div", { class: "chat-log" });
    for (const m of view.messages) {
      log.append(el("div", { class: `msg ${m.speaker}` }, `${m.speaker}: ${m.text}`));
    }
    const input = el("input", {
      type: "text",
      placeholder: "type an offer, e.g. 'i want 2 books and a hat'",
      value: this.state.draft,
    });
    input.oninput = () => {
      this.state = { ...this.state, draft: input.value };
    };
    input.onkeydown = (ev) => {
      if (ev.key === "Enter") void this.sendText();
    };
    const send = el("button", {}, "send") as HTMLButtonElement;
    send.disabled = !canSend(this.state);
    send.onclick = () => void this.sendText();
    const accept = el("button", {}, "accept offer") as HTMLButtonElement;
    accept.disabled = !canSend(this.state);
    accept.onclick = () => void this.sendAccept();
    const select = el("button", {}, "finalize deal") as HTMLButtonElement;
    select.disabled = !canSend(this.state);
    select.onclick = () => void this.sendSelect();
    const walkaway = el("button", { class: "danger" }, "walk away") as HTMLButtonElement;
    walkaway.disabled = !canWalkaway(this.state);
    walkaway.onclick = () => void this.doWalkaway();
    const chat = el("div", { class: "panel chat" }, el("h2", {}, "chat"), log);
    if (this.state.rephrase) {
      chat.append(el("div", { class: "banner rephrase" }, this.state.rephrase));
    }
    chat.append(
      el("div", { class: "composer-row" }, input, send),
      this.renderComposer(),
      el("div", { class: "actions" }, accept, select, walkaway),
    );
    return chat;
  }

  private renderSteppers(
    model: StepperModel,
    onChange: (next: StepperModel) => void,
  ): HTMLElement {
    const grid = el("div", { class: "steppers" });
    model.counts.forEach((count, k) => {
      const minus = el("button", {}, "−") as HTMLButtonElement;
      const plus = el("button", {}, "+") as HTMLButtonElement;
      minus.disabled = (model.take[k] ?? 0) <= 0;
      plus.disabled = (model.take[k] ?? 0) >= count;
      minus.onclick = () => {
        onChange(step(model, k, -1));
      };
      plus.onclick = () => {
        onChange(step(model, k, +1));
      };
      grid.append(
        el(
          "div",
          { class: "stepper-row" },
          el("span", { class: "label" }, `${ISSUE_NAMES[k]} (of ${count})`),
          minus,
          el("span", { class: "num" }, String(model.take[k])),
          plus,
        ),
      );
    });
    return grid;
  }

  private renderComposer(): HTMLElement {
    const wrap = el("div", { class: "composer" }, el("h3", {}, "structured offer"));
    wrap.append(
      this.renderSteppers(this.composer, (next) => {
        this.composer = next;
        this.render();
      }),
    );
    const send = el("button", {}, `propose: ${describeTake(this.composer)}`) as HTMLButtonElement;
    send.disabled = !canSend(this.state);
    send.onclick = () => void this.sendComposer();
    wrap.append(send);
    return wrap;
  }

  private renderDealGrid(): HTMLElement {
    const wrap = el(
      "div",
      { class: "deal-grid" },
      el("h3", {}, "enter the agreed deal (what you keep)"),
    );
    wrap.append(
      this.renderSteppers(this.dealGrid, (next) => {
        this.dealGrid = next;
        this.render();
      }),
    );
    const submit = el("button", {}, `submit deal: ${describeTake(this.dealGrid)}`) as HTMLButtonElement;
    submit.disabled = this.state.busy;
    submit.onclick = () => void this.submitDeal();
    wrap.append(submit);
    return wrap;
  }

  private renderOutcome(): HTMLElement {
    const o = this.state.view!.outcome!;
    return el(
      "div",
      { class: "outcome" },
      el("h3", {}, `outcome: ${o.kind}`),
      el("p", {}, `you scored ${o.your_points} / 10 — the agent scored ${o.agent_points} / 10`),
      o.needs_review ? el("p", { class: "muted" }, "the entered deals did not match; flagged for review") : "",
    );
  }

  private renderLikert(
    name: string,
    anchors: string[],
    value: number | null,
    onPick: (v: number) => void,
  ): HTMLElement {
    const row = el("div", { class: "likert" }, el("span", { class: "label" }, name));
    anchors.forEach((anchor, i) => {
      const input = el("input", {
        type: "radio",
        name,
        value: String(i + 1),
      }) as HTMLInputElement;
      input.checked = value === i + 1;
      input.onchange = () => onPick(i + 1);
      row.append(el("label", { title: anchor }, input, `${i + 1}`));
    });
    const picked = value ? anchors[value - 1] : "";
    row.append(el("span", { class: "muted" }, picked ?? ""));
    return row;
  }

  private renderSurvey(): HTMLElement {
    const wrap = el("div", { class: "survey" }, el("h3", {}, "quick survey"));
    wrap.append(
      this.renderLikert(
        "How satisfied are you with the negotiation outcome?",
        SATISFACTION_ANCHORS,
        this.survey.satisfaction,
        (v) => {
          this.survey = { ...this.survey, satisfaction: v };
          this.render();
        },
      ),
      this.renderLikert(
        "How much do you like your opponent?",
        LIKENESS_ANCHORS,
        this.survey.likeness,
        (v) => {
          this.survey = { ...this.survey, likeness: v };
          this.render();
        },
      ),
    );
    const comments = el("textarea", { placeholder: "comments (optional)" }) as HTMLTextAreaElement;
    comments.value = this.survey.comments;
    comments.oninput = () => {
      this.survey = { ...this.survey, comments: comments.value };
    };
    const submit = el("button", {}, "submit survey") as HTMLButtonElement;
    submit.disabled = !isComplete(this.survey) || this.state.busy;
    submit.onclick = () => void this.submitSurvey();
    wrap.append(comments, submit);
    return wrap;
  }

  dispose(): void {
    this.closeEvents?.();
  }
}
