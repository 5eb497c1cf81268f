"""Request/response bodies for the arena HTTP API.

Response models are the information-asymmetry boundary: none of them has a
field for the agent's values, so the agent's value vector can never leak
into a client payload.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, ConfigDict


class CreateSessionRequest(BaseModel):
    agent_id: str = "random"
    seed: int | None = None


class Message(BaseModel):
    speaker: Literal["you", "agent"]
    text: str
    kind: str
    take: list[int] | None = None


class OutcomeView(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["agreement", "walkaway", "cutoff", "mismatch"]
    your_points: int
    agent_points: int
    needs_review: bool = False


class SessionView(BaseModel):
    model_config = ConfigDict(extra="forbid")

    session_id: str
    agent_id: str
    counts: list[int]
    your_values: list[int]
    your_role: Literal["A", "B"]
    status: Literal["active", "awaiting_deal_entry", "closed"]
    your_turn: bool
    cutoff: int
    utterances_used: int
    messages: list[Message]
    outcome: OutcomeView | None = None
    survey_submitted: bool = False


class ActPayload(BaseModel):
    kind: Literal["propose", "accept", "select", "walkaway"]
    take: list[int] | None = None


class TurnRequest(BaseModel):
    text: str | None = None
    act: ActPayload | None = None


class TurnReply(BaseModel):
    model_config = ConfigDict(extra="forbid")

    accepted: bool
    rephrase: str | None = None
    new_messages: list[Message] = Field(default_factory=list)
    status: Literal["active", "awaiting_deal_entry", "closed"]
    your_turn: bool
    utterances_used: int
    outcome: OutcomeView | None = None


class DealRequest(BaseModel):
    take: list[int]


class SurveyRequest(BaseModel):
    satisfaction: int = Field(ge=1, le=5)
    likeness: int = Field(ge=1, le=5)
    comments: str | None = None


class AgentInfo(BaseModel):
    model_config = ConfigDict(extra="forbid")

    agent_id: str
    stage: int | None = None
    reward: str | None = None
    partner: str | None = None


class ErrorBody(BaseModel):
    detail: str
