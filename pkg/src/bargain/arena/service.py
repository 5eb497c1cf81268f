"""FastAPI arena: session lifecycle, turn exchange, deal entry, walkaway,
survey capture, transcript export, and an event channel for turn push.

The negotiation rules (cutoff, scoring, reconciliation) are the same
``bargain.env`` functions used in training. Session-flow responses are
pydantic models with no field for agent values; the export endpoint is an
operator surface and carries the full scenario so transcripts can be
replayed and verified offline.
"""

from __future__ import annotations

import json
import queue
import time
import threading
import uuid
from collections import defaultdict

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse

from ..env import (
    ActKind,
    DialogueAct,
    DialogueState,
    Division,
    PoolStats,
    Scenario,
    Speaker,
    apply_act,
    resolve_outcome,
    sample_scenario,
)
from ..errors import DataError
from ..policy import Policy
from ..selfplay import load_manifest, load_agent
from ..surface import ParseStatus, parse_utterance, realize_act
from .schemas import (
    AgentInfo,
    CreateSessionRequest,
    DealRequest,
    Message,
    OutcomeView,
    SessionView,
    SurveyRequest,
    TurnReply,
    TurnRequest,
)
from .store import SessionStore

DEFAULT_TEMPERATURE = 0.5


class Arena:
    """Shared state behind the HTTP surface."""

    def __init__(
        self,
        agents: dict[str, Policy],
        agent_meta: dict[str, dict] | None = None,
        db_path: str = ":memory:",
        cutoff: int = 20,
        temperature: float = DEFAULT_TEMPERATURE,
        scenario_pool: PoolStats | None = None,
        seed: int | None = None,
    ):
        if not agents:
            raise DataError("arena needs at least one agent")
        self.agents = agents
        self.agent_meta = agent_meta or {}
        self.store = SessionStore(db_path)
        self.cutoff = cutoff
        self.temperature = temperature
        self.pool = scenario_pool
        self._rng = np.random.default_rng(seed)
        self._rng_lock = threading.Lock()
        self._subscribers: dict[str, list[queue.Queue]] = defaultdict(list)

    @staticmethod
    def from_manifest(manifest_path, include_supervised: bool = False, **kwargs) -> "Arena":
        manifest = load_manifest(manifest_path)
        agents: dict[str, Policy] = {}
        meta: dict[str, dict] = {}
        for entry in manifest["agents"]:
            agents[entry["name"]] = load_agent(manifest, entry["name"])
            meta[entry["name"]] = {
                "stage": entry["stage"],
                "reward": entry["reward"],
                "partner": entry["partner"],
            }
        if include_supervised:
            agents["S"] = load_agent(manifest, "S")
            meta["S"] = {"stage": 1, "reward": None, "partner": None}
        return Arena(agents, meta, **kwargs)

    # ── helpers ──────────────────────────────────────────────────────

    def _draw_seed(self, explicit: int | None) -> int:
        if explicit is not None:
            return int(explicit)
        with self._rng_lock:
            return int(self._rng.integers(2**31))

    def publish(self, session_id: str, event: dict) -> None:
        self.store.append_event(session_id, event)
        for q in list(self._subscribers.get(session_id, [])):
            q.put(event)

    def subscribe(self, session_id: str) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        self._subscribers[session_id].append(q)
        return q

    def unsubscribe(self, session_id: str, q: queue.Queue) -> None:
        try:
            self._subscribers[session_id].remove(q)
        except ValueError:
            pass


# ── session record helpers (plain dicts persisted as JSON) ────────────


def _scenario_of(sess: dict) -> Scenario:
    s = sess["scenario"]
    return Scenario(
        counts=tuple(s["counts"]),
        values_a=tuple(s["values_a"]),
        values_b=tuple(s["values_b"]),
        scenario_id=s["id"],
    )


def _acts_of(sess: dict) -> list[DialogueAct]:
    return [
        DialogueAct(
            kind=ActKind(a["kind"]),
            speaker=Speaker(a["speaker"]),
            proposal=Division(tuple(a["take"])) if a["take"] is not None else None,
        )
        for a in sess["acts"]
    ]


def _dialogue_state(sess: dict, cutoff: int) -> DialogueState:
    scenario = _scenario_of(sess)
    state = DialogueState(scenario=scenario, turn=Speaker.A)
    for act in _acts_of(sess):
        state = apply_act(state, act, cutoff)
    return state


def _act_dict(act: DialogueAct) -> dict:
    return {
        "speaker": act.speaker.value,
        "kind": act.kind.value,
        "take": list(act.proposal.take) if act.proposal else None,
    }


def _message(sess: dict, act: DialogueAct, text: str) -> dict:
    speaker = "you" if act.speaker.value == sess["human_role"] else "agent"
    return {
        "speaker": speaker,
        "text": text,
        "kind": act.kind.value,
        "take": list(act.proposal.take) if act.proposal else None,
    }


def _outcome_view(sess: dict) -> OutcomeView | None:
    o = sess.get("outcome")
    if o is None:
        return None
    human_role = sess["human_role"]
    your = o["points_a"] if human_role == "A" else o["points_b"]
    agent = o["points_b"] if human_role == "A" else o["points_a"]
    return OutcomeView(
        kind=o["kind"], your_points=your, agent_points=agent, needs_review=o["needs_review"]
    )


def _session_view(sess: dict, cutoff: int) -> SessionView:
    human_turn = False
    if sess["status"] == "active":
        state = _dialogue_state(sess, cutoff)
        human_turn = state.turn.value == sess["human_role"]
    return SessionView(
        session_id=sess["session_id"],
        agent_id=sess["agent_id"],
        counts=sess["scenario"]["counts"],
        your_values=sess["scenario"]["values_a"]
        if sess["human_role"] == "A"
        else sess["scenario"]["values_b"],
        your_role=sess["human_role"],
        status=sess["status"],
        your_turn=human_turn,
        cutoff=cutoff,
        utterances_used=len(sess["acts"]),
        messages=[Message(**m) for m in sess["messages"]],
        outcome=_outcome_view(sess),
        survey_submitted=sess.get("survey") is not None,
    )


# ── the application ───────────────────────────────────────────────────


def create_app(arena: Arena) -> FastAPI:
    app = FastAPI(title="bargain arena", version="1")
    app.state.arena = arena

    def _load(session_id: str) -> dict:
        sess = arena.store.get(session_id)
        if sess is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return sess

    def _agent_rng(sess: dict) -> np.random.Generator:
        return np.random.default_rng((sess["seed"], len(sess["acts"])))

    def _agent_policy(sess: dict) -> Policy:
        return arena.agents[sess["agent_id"]]

    def _close(sess: dict, outcome) -> None:
        sess["status"] = "closed"
        sess["outcome"] = {
            "kind": outcome.kind.value,
            "points_a": outcome.points_a,
            "points_b": outcome.points_b,
            "needs_review": outcome.needs_review,
            "division_a": list(outcome.division_a.take) if outcome.division_a else None,
            "division_b": list(outcome.division_b.take) if outcome.division_b else None,
        }

    def _apply_and_record(sess: dict, act: DialogueAct, text: str, new_msgs: list) -> DialogueState:
        state = _dialogue_state(sess, arena.cutoff)
        state = apply_act(state, act, arena.cutoff)
        sess["acts"].append(_act_dict(act))
        msg = _message(sess, act, text)
        sess["messages"].append(msg)
        new_msgs.append(msg)
        arena.publish(sess["session_id"], {"type": "message", **msg})
        return state

    def _agent_turn(sess: dict, new_msgs: list) -> DialogueState:
        scenario = _scenario_of(sess)
        agent_role = Speaker.A if sess["human_role"] == "B" else Speaker.B
        policy = _agent_policy(sess)
        state = _dialogue_state(sess, arena.cutoff)
        h = policy.encode(scenario, agent_role, _acts_of(sess))
        act, _ = policy.choose_act(
            state, agent_role, h, _agent_rng(sess), arena.temperature
        )
        text = realize_act(act, scenario)
        return _apply_and_record(sess, act, text, new_msgs)

    def _finalize_if_terminal(sess: dict, state: DialogueState) -> None:
        if not state.terminal:
            return
        last = state.last_act
        if last is not None and last.kind is ActKind.SELECT:
            sess["status"] = "awaiting_deal_entry"
            arena.publish(sess["session_id"], {"type": "status", "status": sess["status"]})
            return
        _close(sess, resolve_outcome(state))
        arena.publish(sess["session_id"], {"type": "status", "status": "closed"})

    @app.get("/api/agents", response_model=list[AgentInfo])
    def list_agents():
        out = []
        for name in sorted(arena.agents):
            meta = arena.agent_meta.get(name, {})
            out.append(
                AgentInfo(
                    agent_id=name,
                    stage=meta.get("stage"),
                    reward=meta.get("reward"),
                    partner=meta.get("partner"),
                )
            )
        return out

    @app.post("/api/sessions", response_model=SessionView)
    def create_session(req: CreateSessionRequest):
        seed = arena._draw_seed(req.seed)
        rng = np.random.default_rng(seed)
        if req.agent_id == "random":
            agent_id = sorted(arena.agents)[int(rng.integers(len(arena.agents)))]
        elif req.agent_id in arena.agents:
            agent_id = req.agent_id
        else:
            raise HTTPException(404, f"unknown agent {req.agent_id!r}")
        scenario = sample_scenario(rng, arena.pool)
        human_role = "A" if rng.integers(2) == 0 else "B"
        sess = {
            "session_id": uuid.uuid4().hex,
            "agent_id": agent_id,
            "seed": seed,
            "scenario": {
                "id": scenario.scenario_id,
                "counts": list(scenario.counts),
                "values_a": list(scenario.values_a),
                "values_b": list(scenario.values_b),
            },
            "human_role": human_role,
            "acts": [],
            "messages": [],
            "status": "active",
            "outcome": None,
            "survey": None,
            "human_turns": 0,
        }
        if human_role == "B":
            state = _agent_turn(sess, [])
            _finalize_if_terminal(sess, state)
        arena.store.put(sess["session_id"], sess)
        return _session_view(sess, arena.cutoff)

    @app.get("/api/sessions/{session_id}", response_model=SessionView)
    def get_session(session_id: str):
        return _session_view(_load(session_id), arena.cutoff)

    @app.post("/api/sessions/{session_id}/turns", response_model=TurnReply)
    def post_turn(session_id: str, req: TurnRequest):
        with arena.store.lock(session_id):
            sess = _load(session_id)
            if sess["status"] != "active":
                raise HTTPException(409, f"session is {sess['status']}, not active")
            scenario = _scenario_of(sess)
            human_role = Speaker(sess["human_role"])
            state = _dialogue_state(sess, arena.cutoff)
            if state.turn is not human_role:
                raise HTTPException(409, "not your turn")

            def reply(accepted, rephrase=None, new_msgs=(), outcome=None):
                return TurnReply(
                    accepted=accepted,
                    rephrase=rephrase,
                    new_messages=[Message(**m) for m in new_msgs],
                    status=sess["status"],
                    your_turn=sess["status"] == "active"
                    and _dialogue_state(sess, arena.cutoff).turn is human_role,
                    utterances_used=len(sess["acts"]),
                    outcome=_outcome_view(sess),
                )

            if req.act is not None:
                payload = req.act
                if payload.kind == "walkaway":
                    return _do_walkaway(sess, reply)
                try:
                    act = DialogueAct(
                        kind=ActKind(payload.kind),
                        speaker=human_role,
                        proposal=Division(tuple(payload.take)) if payload.take else None,
                    )
                except Exception as e:
                    raise HTTPException(422, f"bad act: {e}")
                text = realize_act(act, scenario)
            elif req.text is not None:
                parsed = parse_utterance(req.text, scenario, human_role)
                if parsed.status is not ParseStatus.PARSED:
                    return reply(
                        accepted=False,
                        rephrase=parsed.note
                        or "could not read an offer; try naming exact item counts",
                    )
                act = parsed.act
                if act.kind is ActKind.WALKAWAY:
                    return _do_walkaway(sess, reply)
                text = req.text
            else:
                raise HTTPException(422, "turn needs either text or a structured act")
            if act.kind is ActKind.PROPOSE and not act.proposal.fits(scenario.counts):
                raise HTTPException(422, f"proposal {act.proposal.take} exceeds item counts")
            if act.kind is ActKind.ACCEPT and state.proposal_on_table() is None:
                return reply(accepted=False, rephrase="there is no offer to accept yet")
            new_msgs: list = []
            state = _apply_and_record(sess, act, text, new_msgs)
            sess["human_turns"] += 1
            _finalize_if_terminal(sess, state)
            if sess["status"] == "active":
                state = _agent_turn(sess, new_msgs)
                _finalize_if_terminal(sess, state)
            arena.store.put(session_id, sess)
            return reply(accepted=True, new_msgs=new_msgs)

    def _do_walkaway(sess: dict, reply):
        if sess["human_turns"] < 1:
            raise HTTPException(409, "you can walk away only after taking at least one turn")
        state = _dialogue_state(sess, arena.cutoff)
        act = DialogueAct(kind=ActKind.WALKAWAY, speaker=Speaker(sess["human_role"]))
        new_msgs: list = []
        state = _apply_and_record(sess, act, realize_act(act, _scenario_of(sess)), new_msgs)
        _close(sess, resolve_outcome(state))
        arena.publish(sess["session_id"], {"type": "status", "status": "closed"})
        arena.store.put(sess["session_id"], sess)
        return reply(accepted=True, new_msgs=new_msgs)

    @app.post("/api/sessions/{session_id}/walkaway", response_model=OutcomeView)
    def walkaway(session_id: str):
        with arena.store.lock(session_id):
            sess = _load(session_id)
            if sess["status"] != "active":
                raise HTTPException(409, f"session is {sess['status']}, not active")
            if sess["human_turns"] < 1:
                raise HTTPException(409, "you can walk away only after taking at least one turn")
            state = _dialogue_state(sess, arena.cutoff)
            act = DialogueAct(kind=ActKind.WALKAWAY, speaker=Speaker(sess["human_role"]))
            state = _apply_and_record(sess, act, "<walkaway>", [])
            _close(sess, resolve_outcome(state))
            arena.publish(session_id, {"type": "status", "status": "closed"})
            arena.store.put(session_id, sess)
            return _outcome_view(sess)

    @app.post("/api/sessions/{session_id}/deal", response_model=OutcomeView)
    def submit_deal(session_id: str, req: DealRequest):
        with arena.store.lock(session_id):
            sess = _load(session_id)
            if sess["status"] != "awaiting_deal_entry":
                raise HTTPException(409, f"session is {sess['status']}, not awaiting a deal entry")
            scenario = _scenario_of(sess)
            if len(req.take) != 3:
                raise HTTPException(422, "division needs one entry per issue")
            problems = [
                f"issue {k}: claimed {t}, available {c}"
                for k, (t, c) in enumerate(zip(req.take, scenario.counts))
                if not 0 <= t <= c
            ]
            if problems:
                raise HTTPException(422, "; ".join(problems))
            human_div = Division(tuple(req.take))
            human_role = Speaker(sess["human_role"])
            agent_role = human_role.other
            policy = _agent_policy(sess)
            _, agent_div = policy.predict_output_deal(scenario, agent_role, _acts_of(sess))
            state = _dialogue_state(sess, arena.cutoff)
            if human_role is Speaker.A:
                outcome = resolve_outcome(state, human_div, agent_div)
            else:
                outcome = resolve_outcome(state, agent_div, human_div)
            _close(sess, outcome)
            arena.publish(session_id, {"type": "status", "status": "closed"})
            arena.store.put(session_id, sess)
            return _outcome_view(sess)

    @app.post("/api/sessions/{session_id}/survey")
    def submit_survey(session_id: str, req: SurveyRequest):
        with arena.store.lock(session_id):
            sess = _load(session_id)
            if sess["status"] != "closed":
                raise HTTPException(409, "survey opens once the session is closed")
            if sess.get("survey") is not None:
                raise HTTPException(409, "survey already submitted")
            sess["survey"] = {
                "satisfaction": req.satisfaction,
                "likeness": req.likeness,
                "comments": req.comments,
            }
            arena.store.put(session_id, sess)
            return {"ok": True}

    @app.get("/api/sessions/{session_id}/events")
    def events(session_id: str, wait: bool = False, timeout: float = 30.0):
        sess = _load(session_id)

        def poll_body():
            rows = [
                json.dumps(m, sort_keys=True) for m in sess["messages"]
            ]
            return "\n".join(f"data: {r}" for r in rows) + "\n\n"

        if not wait:
            return StreamingResponse(iter([poll_body()]), media_type="text/event-stream")

        q = arena.subscribe(session_id)

        def stream():
            try:
                yield poll_body()
                deadline = time.monotonic() + timeout
                while time.monotonic() < deadline:
                    try:
                        event = q.get(timeout=1.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(event, sort_keys=True)}\n\n"
                    if event.get("type") == "status" and event.get("status") == "closed":
                        break
            finally:
                arena.unsubscribe(session_id, q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/export")
    def export(agent_id: str | None = None):
        lines = []
        for sess in arena.store.all_sessions():
            if agent_id and sess["agent_id"] != agent_id:
                continue
            meta = arena.agent_meta.get(sess["agent_id"], {})
            lines.append(
                json.dumps(
                    {
                        "v": 1,
                        "session_id": sess["session_id"],
                        "agent_id": sess["agent_id"],
                        "agent_provenance": meta,
                        "scenario": sess["scenario"],
                        "human_role": sess["human_role"],
                        "acts": sess["acts"],
                        "messages": sess["messages"],
                        "status": sess["status"],
                        "outcome": sess["outcome"],
                        "survey": sess["survey"],
                    },
                    sort_keys=True,
                )
            )
        body = "\n".join(lines) + ("\n" if lines else "")
        return StreamingResponse(iter([body]), media_type="application/x-ndjson")

    return app
