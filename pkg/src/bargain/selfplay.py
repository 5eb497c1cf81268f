"""Self-play rollouts, REINFORCE updates against a frozen partner, and the
three-stage pipeline producing the six personality agents.

Rewards are terminal-only; step weights discount from the terminal step
backward (gamma ** (T - t)), with a running-average baseline. Non-agreement
episodes are worth 0, so they push sampled behavior below baseline.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .env import (
    ActKind,
    DialogueAct,
    DialogueState,
    Division,
    Outcome,
    OutcomeKind,
    PoolStats,
    Scenario,
    Speaker,
    apply_act,
    resolve_outcome,
    sample_scenario,
)
from .errors import ContractError, DataError, IntegrityError, TrainingError
from .policy import (
    ACT_KINDS,
    Policy,
    RunningEncoder,
    clip_gradient,
    masked_softmax,
    issue_masks,
    zeros_like_params,
    N_ISSUES,
)
from .rewards import RewardConfig, preset, reward_for_outcome

EPISODE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainerConfig:
    lr: float = 0.1
    gamma: float = 0.95
    episodes: int = 16000
    cutoff: int = 20
    reward: RewardConfig = field(default_factory=lambda: preset("selfish"))
    baseline_window: int = 100
    grad_clip: float = 0.5
    batch_size: int = 1
    seed: int = 0
    partner_temperature: float = 1.0
    learner_temperature: float = 1.0
    log_every: int = 500
    interleave_supervised: bool = False

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ContractError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.cutoff < 2:
            raise ContractError(f"cutoff must be >= 2, got {self.cutoff}")
        if self.episodes < 0:
            raise ContractError("episode budget must be nonnegative")


@dataclass(frozen=True)
class Episode:
    scenario: Scenario
    learner_role: Speaker
    acts: tuple[DialogueAct, ...]
    learner_steps: tuple[tuple[int, float], ...]  # (position in acts, log-prob)
    output_take: tuple | None
    output_logprob: float | None
    outcome: Outcome
    reward: float

    @property
    def T(self) -> int:
        return len(self.acts)


def episode_to_json(ep: Episode) -> str:
    return json.dumps(
        {
            "v": EPISODE_SCHEMA_VERSION,
            "scenario": json.loads(ep.scenario.to_json()),
            "learner_role": ep.learner_role.value,
            "acts": [
                {
                    "speaker": a.speaker.value,
                    "kind": a.kind.value,
                    "take": list(a.proposal.take) if a.proposal else None,
                }
                for a in ep.acts
            ],
            "learner_steps": [[p, lp] for p, lp in ep.learner_steps],
            "output_take": list(ep.output_take) if ep.output_take else None,
            "output_logprob": ep.output_logprob,
            "outcome": {
                "kind": ep.outcome.kind.value,
                "points_a": ep.outcome.points_a,
                "points_b": ep.outcome.points_b,
                "division_a": list(ep.outcome.division_a.take) if ep.outcome.division_a else None,
                "division_b": list(ep.outcome.division_b.take) if ep.outcome.division_b else None,
                "needs_review": ep.outcome.needs_review,
            },
            "reward": ep.reward,
        },
        sort_keys=True,
    )


def episode_from_json(line: str) -> Episode:
    d = json.loads(line)
    scenario = Scenario.from_json(json.dumps(d["scenario"]))
    acts = tuple(
        DialogueAct(
            kind=ActKind(a["kind"]),
            speaker=Speaker(a["speaker"]),
            proposal=Division(tuple(a["take"])) if a["take"] is not None else None,
        )
        for a in d["acts"]
    )
    return Episode(
        scenario=scenario,
        learner_role=Speaker(d["learner_role"]),
        acts=acts,
        learner_steps=tuple((int(p), float(lp)) for p, lp in d["learner_steps"]),
        output_take=tuple(d["output_take"]) if d["output_take"] else None,
        output_logprob=d["output_logprob"],
        outcome=Outcome(
            kind=OutcomeKind(d["outcome"]["kind"]),
            points_a=d["outcome"]["points_a"],
            points_b=d["outcome"]["points_b"],
            division_a=Division(tuple(d["outcome"]["division_a"]))
            if d["outcome"].get("division_a")
            else None,
            division_b=Division(tuple(d["outcome"]["division_b"]))
            if d["outcome"].get("division_b")
            else None,
            needs_review=bool(d["outcome"].get("needs_review", False)),
        ),
        reward=float(d["reward"]),
    )


def rollout(
    learner,
    partner,
    scenario: Scenario,
    cfg: TrainerConfig,
    rng: np.random.Generator,
    learner_role: Speaker = Speaker.A,
    greedy: bool = False,
    sample_output: bool | None = None,
) -> Episode:
    """Play one strictly alternating dialogue; the learner's choices carry log-probs.

    On a selection, the learner samples its output deal (training default;
    argmax in evaluation) and the partner reports its argmax. The first
    mover is always Speaker.A; ``learner_role`` picks the learner's seat.
    """
    if sample_output is None:
        sample_output = not greedy
    policies = {learner_role: learner, learner_role.other: partner}
    encoders = {
        role: pol.encoder(scenario, role) for role, pol in policies.items()
    }
    temps = {
        learner_role: 0.0 if greedy else cfg.learner_temperature,
        learner_role.other: 0.0 if greedy else cfg.partner_temperature,
    }
    state = DialogueState(scenario=scenario, turn=Speaker.A)
    learner_steps: list[tuple[int, float]] = []
    while not state.terminal:
        role = state.turn
        act, logprob = policies[role].choose_act(
            state, role, encoders[role].h, rng, temps[role]
        )
        if act.kind not in [k for k in ACT_KINDS] or (
            act.kind is ActKind.ACCEPT and state.proposal_on_table() is None
        ):
            raise TrainingError(f"policy emitted illegal act {act.kind} after masking")
        if role is learner_role:
            learner_steps.append((len(state.history), logprob))
        state = apply_act(state, act, cfg.cutoff)
        for enc in encoders.values():
            enc.push(act)
    output_take = None
    output_logprob = None
    if state.last_act is not None and state.last_act.kind is ActKind.SELECT:
        own_div, output_logprob = policies[learner_role].choose_output(
            scenario, learner_role, encoders[learner_role].h, rng, greedy=not sample_output
        )
        partner_div, _ = policies[learner_role.other].choose_output(
            scenario, learner_role.other, encoders[learner_role.other].h, greedy=True
        )
        output_take = own_div.take
        if learner_role is Speaker.A:
            outcome = resolve_outcome(state, own_div, partner_div)
        else:
            outcome = resolve_outcome(state, partner_div, own_div)
    else:
        outcome = resolve_outcome(state)
        output_logprob = None
    reward = reward_for_outcome(outcome, learner_role, cfg.reward)
    return Episode(
        scenario=scenario,
        learner_role=learner_role,
        acts=state.history,
        learner_steps=tuple(learner_steps),
        output_take=output_take,
        output_logprob=output_logprob,
        outcome=outcome,
        reward=reward,
    )


class RunningBaseline:
    """Running average of episode rewards over a sliding window."""

    def __init__(self, window: int):
        self._values: deque[float] = deque(maxlen=window)

    @property
    def value(self) -> float:
        return sum(self._values) / len(self._values) if self._values else 0.0

    def update(self, reward: float) -> None:
        self._values.append(reward)


def _mask_at(acts, pos, scenario) -> np.ndarray:
    standing = pos > 0 and acts[pos - 1].kind is ActKind.PROPOSE
    mask = np.zeros(3, dtype=bool)
    mask[0] = True  # PROPOSE
    mask[1] = standing  # ACCEPT
    mask[2] = pos > 0  # SELECT
    return mask


def episode_surrogate_grad(
    policy: Policy, episode: Episode, cfg: TrainerConfig, baseline: float, grads,
    check_logprobs: bool = False,
) -> float:
    """Accumulate the gradient of -sum_t w_t * log pi(a_t), w_t = gamma^(T-t) (R-b).

    Returns the surrogate loss value. With ``check_logprobs`` the recomputed
    log-probs are asserted against the ones stored at rollout time.
    """
    R = episode.reward
    T = episode.T
    arch = policy.arch
    params = policy.params
    enc = RunningEncoder(params, episode.scenario, episode.learner_role)
    for act in episode.acts:
        enc.push(act)
    d_hiddens: dict[int, np.ndarray] = {}
    surrogate = 0.0

    def dh_at(pos):
        if pos not in d_hiddens:
            d_hiddens[pos] = np.zeros(arch.hidden)
        return d_hiddens[pos]

    masks = issue_masks(arch, episode.scenario.counts)
    for pos, stored_lp in episode.learner_steps:
        act = episode.acts[pos]
        w = (cfg.gamma ** (T - (pos + 1))) * (R - baseline)
        h = enc.hiddens[pos]
        kmask = _mask_at(episode.acts, pos, episode.scenario)
        ki = ACT_KINDS.index(act.kind)
        p = masked_softmax(params["Wact"] @ h + params["bact"], kmask)
        logprob = float(np.log(p[ki]))
        dlogits = p.copy()
        dlogits[ki] -= 1.0
        dlogits *= w
        grads["Wact"] += np.outer(dlogits, h)
        grads["bact"] += dlogits
        dh_at(pos)[:] += params["Wact"].T @ dlogits
        if act.kind is ActKind.PROPOSE:
            logits = (params["Wprop"] @ h + params["bprop"]).reshape(N_ISSUES, -1)
            dlog = np.zeros_like(logits)
            for k in range(N_ISSUES):
                pk = masked_softmax(logits[k], masks[k])
                ti = act.proposal.take[k]
                logprob += float(np.log(pk[ti]))
                dlog[k] = pk
                dlog[k][ti] -= 1.0
            flat = dlog.reshape(-1) * w
            grads["Wprop"] += np.outer(flat, h)
            grads["bprop"] += flat
            dh_at(pos)[:] += params["Wprop"].T @ flat
        if check_logprobs and abs(logprob - stored_lp) > 1e-9:
            raise IntegrityError(
                f"off-policy episode: stored logprob {stored_lp} != recomputed {logprob}"
            )
        surrogate += -w * logprob
    if episode.output_take is not None and episode.output_logprob is not None:
        w = R - baseline  # gamma^0: the output deal is the final decision
        pos = T
        h = enc.hiddens[pos]
        logits = (params["Wout"] @ h + params["bout"]).reshape(N_ISSUES, -1)
        dlog = np.zeros_like(logits)
        logprob = 0.0
        for k in range(N_ISSUES):
            pk = masked_softmax(logits[k], masks[k])
            ti = episode.output_take[k]
            logprob += float(np.log(pk[ti]))
            dlog[k] = pk
            dlog[k][ti] -= 1.0
        flat = dlog.reshape(-1) * w
        grads["Wout"] += np.outer(flat, h)
        grads["bout"] += flat
        dh_at(pos)[:] += params["Wout"].T @ flat
        if check_logprobs and abs(logprob - episode.output_logprob) > 1e-9:
            raise IntegrityError("off-policy output-deal logprob")
        surrogate += -w * logprob
    if d_hiddens:
        enc.backward(d_hiddens, grads)
    return surrogate


def reinforce_update(
    policy: Policy,
    episodes: list[Episode],
    cfg: TrainerConfig,
    baseline: RunningBaseline,
) -> dict:
    """One policy-gradient ascent step from a batch of on-policy episodes.

    The baseline is read before and updated after, so a batch whose rewards
    all equal the current baseline changes nothing.
    """
    if not episodes:
        raise DataError("empty episode batch")
    b = baseline.value
    grads = zeros_like_params(policy.params)
    surrogate = 0.0
    for ep in episodes:
        surrogate += episode_surrogate_grad(policy, ep, cfg, b, grads)
    for g in grads.values():
        g /= len(episodes)
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite policy gradient")
    norm = clip_gradient(grads, cfg.grad_clip)
    for name in policy.params:
        policy.params[name] -= cfg.lr * grads[name]
    for ep in episodes:
        baseline.update(ep.reward)
    return {
        "surrogate": surrogate / len(episodes),
        "grad_norm": norm,
        "baseline": b,
        "mean_reward": sum(ep.reward for ep in episodes) / len(episodes),
    }


@dataclass(frozen=True)
class AgentSpec:
    name: str
    reward: str
    partner: str
    stage: int
    seed: int
    params_hash: str
    path: str = ""
    parent_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "reward": self.reward,
            "partner": self.partner,
            "stage": self.stage,
            "seed": self.seed,
            "params_hash": self.params_hash,
            "path": self.path,
            "parent_hash": self.parent_hash,
        }

    @staticmethod
    def from_dict(d: dict) -> "AgentSpec":
        return AgentSpec(**{k: d[k] for k in (
            "name", "reward", "partner", "stage", "seed", "params_hash", "path", "parent_hash"
        )})


def agent_name(reward: str, partner: str) -> str:
    return f"M[r={reward},p={partner}]"


def train_stage(
    learner_init: Policy,
    partner: Policy,
    cfg: TrainerConfig,
    scenario_pool: PoolStats | None = None,
    log_sink=None,
) -> tuple[Policy, list[dict]]:
    """Run the interaction budget against a frozen partner.

    The learner alternates seats between episodes. The partner's parameters
    are hash-checked before and after; any drift is an integrity failure.
    """
    partner_hash = partner.hash()
    learner = learner_init.clone()
    rng = np.random.default_rng(cfg.seed)
    baseline = RunningBaseline(cfg.baseline_window)
    logs: list[dict] = []
    window: deque[Episode] = deque(maxlen=cfg.log_every)
    batch: list[Episode] = []
    for i in range(cfg.episodes):
        scenario = sample_scenario(rng, scenario_pool)
        role = Speaker.A if i % 2 == 0 else Speaker.B
        ep = rollout(learner, partner, scenario, cfg, rng, learner_role=role)
        batch.append(ep)
        window.append(ep)
        if len(batch) >= cfg.batch_size:
            reinforce_update(learner, batch, cfg, baseline)
            batch = []
        if (i + 1) % cfg.log_every == 0:
            row = {
                "episode": i + 1,
                "mean_reward": sum(e.reward for e in window) / len(window),
                "agreement_rate": sum(e.outcome.is_agreement for e in window) / len(window),
                "cutoff_rate": sum(e.outcome.kind is OutcomeKind.CUTOFF for e in window)
                / len(window),
            }
            logs.append(row)
            if log_sink is not None:
                log_sink(row)
    if batch:
        reinforce_update(learner, batch, cfg, baseline)
    if partner.hash() != partner_hash:
        raise IntegrityError("partner parameters changed during a training stage")
    return learner, logs


def build_matrix(
    supervised: Policy,
    base_cfg: TrainerConfig,
    out_dir,
    scenario_pool: PoolStats | None = None,
    log_sink=None,
    rewards: dict[str, RewardConfig] | None = None,
) -> dict:
    """Train the full 2x3 personality grid from the supervised model S.

    Stage 2 trains {fair, selfish} against frozen S; stage 3 trains
    {fair, selfish} against each frozen stage-2 agent. Writes checkpoints
    plus a manifest with hashes and provenance. ``rewards`` may swap in
    explicit (a, b) coefficients for either personality name.
    """
    import pathlib

    rewards = rewards or {"fair": preset("fair"), "selfish": preset("selfish")}
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s_hash = supervised.hash()
    s_path = out / "S.npz"
    supervised.save(s_path)
    manifest = {
        "version": 1,
        "seed": base_cfg.seed,
        "supervised": {"name": "S", "path": str(s_path), "params_hash": s_hash},
        "agents": [],
    }
    for name, rc in rewards.items():
        if rc.outside_fs_constraint:
            manifest.setdefault("warnings", []).append(
                f"reward {name!r} (a={rc.a}, b={rc.b}) is outside_fs_constraint"
            )
    stage2: dict[str, Policy] = {}
    specs: list[AgentSpec] = []

    def run(reward_name: str, partner_name: str, partner_policy: Policy, stage: int, idx: int):
        cfg = replace(
            base_cfg, reward=rewards[reward_name], seed=base_cfg.seed + 101 * idx + stage
        )
        trained, logs = train_stage(
            supervised, partner_policy, cfg, scenario_pool, log_sink
        )
        name = agent_name(reward_name, partner_name)
        fname = out / (name.replace("[", "_").replace("]", "").replace("=", "-").replace(",", "_") + ".npz")
        trained.meta.update(
            stage=stage, reward=reward_name, partner=partner_name, parent_hash=partner_policy.hash()
        )
        trained.save(fname)
        spec = AgentSpec(
            name=name,
            reward=reward_name,
            partner=partner_name,
            stage=stage,
            seed=cfg.seed,
            params_hash=trained.hash(),
            path=str(fname),
            parent_hash=partner_policy.hash(),
        )
        specs.append(spec)
        manifest["agents"].append(spec.to_dict())
        return trained

    idx = 0
    for reward_name in ("fair", "selfish"):
        stage2[reward_name] = run(reward_name, "S", supervised, stage=2, idx=idx)
        idx += 1
    for reward_name in ("fair", "selfish"):
        for partner_name in ("fair", "selfish"):
            run(reward_name, partner_name, stage2[partner_name], stage=3, idx=idx)
            idx += 1
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_manifest(path) -> dict:
    import pathlib

    p = pathlib.Path(path)
    if not p.exists():
        raise DataError(f"manifest not found: {p}")
    return json.loads(p.read_text())


def load_agent(manifest: dict, name: str) -> Policy:
    """Load a checkpoint by manifest name, verifying its hash."""
    entries = {a["name"]: a for a in manifest["agents"]}
    entries["S"] = manifest["supervised"]
    if name not in entries:
        raise DataError(f"agent {name!r} not in manifest; have {sorted(entries)}")
    entry = entries[name]
    policy = Policy.load(entry["path"])
    if policy.hash() != entry["params_hash"]:
        raise IntegrityError(f"checkpoint hash mismatch for {name}")
    return policy
