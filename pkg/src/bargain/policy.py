"""Differentiable act-level negotiation policy.

Three functional blocks over a small recurrent core, all in numpy with
hand-written backprop:

* goal encoder: counts + own values -> initial hidden state;
* history encoder: one gated recurrent cell consuming embedded acts, seen
  from the owner's perspective (proposals are embedded as the implied own
  share, so both sides of a dialogue encode it with their own goals);
* heads: act type over {PROPOSE, ACCEPT, SELECT}, a per-issue proposal
  categorical over 0..count, and a per-issue output-deal categorical.

Parameters are plain float64 arrays; everything is deterministic given a
seed, and clones are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .env import (
    ActKind,
    DialogueAct,
    Division,
    DialogueState,
    Scenario,
    Speaker,
    DEFAULT_CUTOFF,
    MAX_POINTS,
    N_ISSUES,
)
from .errors import ContractError, DataError, TrainingError

ACT_KINDS = (ActKind.PROPOSE, ActKind.ACCEPT, ActKind.SELECT)
_KIND_INDEX = {k: i for i, k in enumerate(ACT_KINDS)}
FEAT_DIM = 9  # kind one-hot(3), own flag, implied own share(3), has-proposal, position
GOAL_DIM = 2 * N_ISSUES
_NEG_INF = -1e30


@dataclass(frozen=True)
class ArchSpec:
    hidden: int = 64
    max_count: int = 10

    @property
    def head_width(self) -> int:
        return N_ISSUES * (self.max_count + 1)


def init_params(arch: ArchSpec, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    H, F, W = arch.hidden, FEAT_DIM, arch.head_width

    def u(*shape):
        return rng.uniform(-0.1, 0.1, size=shape)

    return {
        "Wg": u(H, GOAL_DIM),
        "bg": np.zeros(H),
        "Wx": u(3 * H, F),
        "Wh": u(3 * H, H),
        "bh": np.zeros(3 * H),
        "Wact": u(3, H),
        "bact": np.zeros(3),
        "Wprop": u(W, H),
        "bprop": np.zeros(W),
        "Wout": u(W, H),
        "bout": np.zeros(W),
    }


def zeros_like_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def params_hash(params: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        digest.update(name.encode())
        digest.update(str(arr.dtype).encode())
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()


def clip_gradient(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


# ── feature construction ──────────────────────────────────────────────


def goal_vector(scenario: Scenario, role: Speaker) -> np.ndarray:
    counts = np.asarray(scenario.counts, dtype=float)
    values = np.asarray(scenario.values_for(role), dtype=float)
    return np.concatenate([counts / MAX_POINTS, values / MAX_POINTS])


def embed_act(scenario: Scenario, role: Speaker, act: DialogueAct, position: int) -> np.ndarray:
    x = np.zeros(FEAT_DIM)
    if act.kind is ActKind.WALKAWAY:  # terminal; encoded defensively as a select-like token
        x[_KIND_INDEX[ActKind.SELECT]] = 1.0
    else:
        x[_KIND_INDEX[act.kind]] = 1.0
    x[3] = 1.0 if act.speaker is role else 0.0
    if act.kind is ActKind.PROPOSE:
        counts = scenario.counts
        take = act.proposal.take
        own = take if act.speaker is role else tuple(c - t for c, t in zip(counts, take))
        for k in range(N_ISSUES):
            x[4 + k] = own[k] / counts[k] if counts[k] else 0.0
        x[7] = 1.0
    x[8] = (position + 1) / DEFAULT_CUTOFF
    return x


# ── recurrent core ────────────────────────────────────────────────────


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def init_hidden(params, goal):
    pre = params["Wg"] @ goal + params["bg"]
    h0 = np.tanh(pre)
    return h0, (goal, h0)


def gru_step(params, x, h_prev):
    H = h_prev.shape[0]
    pre = params["Wx"] @ x + params["bh"]
    preh = params["Wh"] @ h_prev
    z = _sigmoid(pre[:H] + preh[:H])
    r = _sigmoid(pre[H : 2 * H] + preh[H : 2 * H])
    c = np.tanh(pre[2 * H :] + r * preh[2 * H :])
    h = (1.0 - z) * h_prev + z * c
    return h, (x, h_prev, z, r, c, preh[2 * H :])


def gru_back_step(params, cache, dh, grads):
    x, h_prev, z, r, c, preh_c = cache
    H = h_prev.shape[0]
    dz = dh * (c - h_prev)
    dc = dh * z
    dh_prev = dh * (1.0 - z)
    dc_pre = dc * (1.0 - c * c)
    dr = dc_pre * preh_c
    dpreh_c = dc_pre * r
    dz_pre = dz * z * (1.0 - z)
    dr_pre = dr * r * (1.0 - r)
    dpre = np.concatenate([dz_pre, dr_pre, dc_pre])
    dpreh = np.concatenate([dz_pre, dr_pre, dpreh_c])
    grads["Wx"] += np.outer(dpre, x)
    grads["bh"] += dpre
    grads["Wh"] += np.outer(dpreh, h_prev)
    dh_prev += params["Wh"].T @ dpreh
    return dh_prev


def goal_back(params, goal_cache, dh0, grads):
    goal, h0 = goal_cache
    dpre = dh0 * (1.0 - h0 * h0)
    grads["Wg"] += np.outer(dpre, goal)
    grads["bg"] += dpre


class RunningEncoder:
    """Incremental dialogue encoder for one side; caches steps for backprop."""

    def __init__(self, params, scenario: Scenario, role: Speaker):
        self.params = params
        self.scenario = scenario
        self.role = role
        self.h, self.goal_cache = init_hidden(params, goal_vector(scenario, role))
        self.hiddens = [self.h]
        self.caches = []

    def push(self, act: DialogueAct) -> np.ndarray:
        x = embed_act(self.scenario, self.role, act, len(self.caches))
        self.h, cache = gru_step(self.params, x, self.h)
        self.hiddens.append(self.h)
        self.caches.append(cache)
        return self.h

    def backward(self, d_hiddens: dict[int, np.ndarray], grads) -> None:
        """Backprop given gradients w.r.t. selected positions of ``hiddens``."""
        T = len(self.caches)
        dh = d_hiddens.get(T, np.zeros_like(self.h)).copy()
        for t in range(T - 1, -1, -1):
            dh = gru_back_step(self.params, self.caches[t], dh, grads)
            if t in d_hiddens:
                dh = dh + d_hiddens[t]
        goal_back(self.params, self.goal_cache, dh, grads)


def encode(params, scenario: Scenario, role: Speaker, acts) -> np.ndarray:
    """State vector after a (legal) act history; pure in inputs and params."""
    enc = RunningEncoder(params, scenario, role)
    for act in acts:
        enc.push(act)
    return enc.h


# ── heads and distributions ───────────────────────────────────────────


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        raise ContractError("all actions masked")
    z = np.where(mask, logits, _NEG_INF)
    z = z - z.max()
    e = np.exp(z) * mask
    return e / e.sum()


def kind_mask(state: DialogueState) -> np.ndarray:
    mask = np.zeros(3, dtype=bool)
    mask[_KIND_INDEX[ActKind.PROPOSE]] = True
    if state.proposal_on_table() is not None:
        mask[_KIND_INDEX[ActKind.ACCEPT]] = True
    if state.history:
        mask[_KIND_INDEX[ActKind.SELECT]] = True
    return mask


def issue_masks(arch: ArchSpec, counts) -> np.ndarray:
    masks = np.zeros((N_ISSUES, arch.max_count + 1), dtype=bool)
    for k, c in enumerate(counts):
        if c > arch.max_count:
            raise ContractError(f"count {c} exceeds the architecture's max_count {arch.max_count}")
        masks[k, : c + 1] = True
    return masks


@dataclass
class ActDistribution:
    kind_probs: np.ndarray  # (3,)
    issue_probs: np.ndarray  # (N_ISSUES, max_count+1), masked rows renormalized


def _head_probs(W, b, h, arch: ArchSpec, counts, temperature: float = 1.0):
    logits = (W @ h + b).reshape(N_ISSUES, arch.max_count + 1)
    if temperature not in (1.0, 0.0):
        logits = logits / temperature
    masks = issue_masks(arch, counts)
    return np.stack([masked_softmax(logits[k], masks[k]) for k in range(N_ISSUES)])


def act_distribution(
    params, arch: ArchSpec, h: np.ndarray, state: DialogueState, temperature: float = 1.0
) -> ActDistribution:
    logits = params["Wact"] @ h + params["bact"]
    if temperature not in (1.0, 0.0):
        logits = logits / temperature
    kinds = masked_softmax(logits, kind_mask(state))
    issues = _head_probs(
        params["Wprop"], params["bprop"], h, arch, state.scenario.counts, temperature
    )
    return ActDistribution(kind_probs=kinds, issue_probs=issues)


def output_deal_probs(params, arch: ArchSpec, h: np.ndarray, counts) -> np.ndarray:
    return _head_probs(params["Wout"], params["bout"], h, arch, counts)


def _sample(probs: np.ndarray, rng: np.random.Generator | None, greedy: bool) -> int:
    if greedy or rng is None:
        return int(np.argmax(probs))
    return int(rng.choice(len(probs), p=probs))


# ── the policy object ─────────────────────────────────────────────────

CHECKPOINT_VERSION = 1


@dataclass
class Policy:
    params: dict[str, np.ndarray]
    arch: ArchSpec
    meta: dict = field(default_factory=dict)

    @staticmethod
    def init(arch: ArchSpec, seed: int, meta: dict | None = None) -> "Policy":
        return Policy(init_params(arch, seed), arch, dict(meta or {}, seed=seed))

    def clone(self, meta: dict | None = None) -> "Policy":
        return Policy(
            {k: v.copy() for k, v in self.params.items()},
            self.arch,
            dict(self.meta if meta is None else meta),
        )

    def hash(self) -> str:
        return params_hash(self.params)

    def encoder(self, scenario: Scenario, role: Speaker) -> RunningEncoder:
        return RunningEncoder(self.params, scenario, role)

    def encode(self, scenario: Scenario, role: Speaker, acts) -> np.ndarray:
        return encode(self.params, scenario, role, acts)

    def choose_act(
        self,
        state: DialogueState,
        role: Speaker,
        h: np.ndarray,
        rng: np.random.Generator | None = None,
        temperature: float = 1.0,
    ) -> tuple[DialogueAct, float]:
        """Sample (or argmax when temperature == 0) the next act and its log-prob."""
        greedy = temperature == 0.0
        dist = act_distribution(self.params, self.arch, h, state, temperature)
        ki = _sample(dist.kind_probs, rng, greedy)
        logprob = float(np.log(dist.kind_probs[ki]))
        kind = ACT_KINDS[ki]
        proposal = None
        if kind is ActKind.PROPOSE:
            take = []
            for k in range(N_ISSUES):
                ti = _sample(dist.issue_probs[k], rng, greedy)
                logprob += float(np.log(dist.issue_probs[k][ti]))
                take.append(ti)
            proposal = Division(tuple(take))
        return DialogueAct(kind=kind, speaker=role, proposal=proposal), logprob

    def choose_output(
        self,
        scenario: Scenario,
        role: Speaker,
        h: np.ndarray,
        rng: np.random.Generator | None = None,
        greedy: bool = True,
    ) -> tuple[Division, float]:
        probs = output_deal_probs(self.params, self.arch, h, scenario.counts)
        take = []
        logprob = 0.0
        for k in range(N_ISSUES):
            ti = _sample(probs[k], rng, greedy)
            logprob += float(np.log(probs[k][ti]))
            take.append(ti)
        return Division(tuple(take)), logprob

    def predict_output_deal(
        self, scenario: Scenario, role: Speaker, acts
    ) -> tuple[np.ndarray, Division]:
        """Per-issue own-share distribution and its argmax for a SELECT-terminal dialogue."""
        if not acts or acts[-1].kind not in (ActKind.SELECT,):
            raise ContractError("output deal is only defined after a selection")
        h = self.encode(scenario, role, acts)
        probs = output_deal_probs(self.params, self.arch, h, scenario.counts)
        take = tuple(int(np.argmax(probs[k])) for k in range(N_ISSUES))
        return probs, Division(take)

    def save(self, path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "arch": {"hidden": self.arch.hidden, "max_count": self.arch.max_count},
            **self.meta,
        }
        np.savez(path, _meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **self.params)

    @staticmethod
    def load(path) -> "Policy":
        with np.load(path) as data:
            meta = json.loads(bytes(data["_meta"]).decode())
            params = {k: data[k].astype(np.float64) for k in data.files if k != "_meta"}
        arch = ArchSpec(**meta.pop("arch"))
        meta.pop("version", None)
        return Policy(params, arch, meta)


# ── supervised imitation ──────────────────────────────────────────────


@dataclass
class PreparedExample:
    scenario: Scenario
    acts: tuple[DialogueAct, ...]
    sup_points: list  # (position, kind_target, kind_mask, take_target | None)
    output_target: tuple | None  # own take
    n_terms: int


def prepare_example(ex, arch: ArchSpec) -> PreparedExample | None:
    """Static supervision points for one training example (YOU side = A)."""
    scenario = ex.scenario
    sup_points = []
    state = DialogueState(
        scenario=scenario, turn=ex.acts[0].speaker if ex.acts else Speaker.A
    )
    n_terms = 0
    for i, act in enumerate(ex.acts):
        if act.speaker is Speaker.A and ex.fully_extracted:
            mask = kind_mask(state)
            ki = _KIND_INDEX.get(act.kind)
            if ki is not None and mask[ki]:
                take = act.proposal.take if act.kind is ActKind.PROPOSE else None
                sup_points.append((i, ki, mask, take))
                n_terms += 1 + (N_ISSUES if take is not None else 0)
        state = DialogueState(
            scenario=scenario,
            history=state.history + (act,),
            turn=act.speaker.other,
            terminal=False,
        )
    output = None
    if ex.output_target is not None and ex.acts and ex.acts[-1].kind is ActKind.SELECT:
        output = ex.output_target.take
        n_terms += N_ISSUES
    if not sup_points and output is None:
        return None
    return PreparedExample(scenario, tuple(ex.acts), sup_points, output, n_terms)


def _ce(probs: np.ndarray, target: int) -> float:
    return -float(np.log(max(probs[target], 1e-300)))


def example_loss_grad(params, arch: ArchSpec, prep: PreparedExample, grads=None):
    """Joint next-act + output-deal cross-entropy (sum over terms) and gradients."""
    enc = RunningEncoder(params, prep.scenario, Speaker.A)
    for act in prep.acts:
        enc.push(act)
    H = arch.hidden
    want_grad = grads is not None
    d_hiddens: dict[int, np.ndarray] = {}
    loss = 0.0

    def dh_at(pos):
        if pos not in d_hiddens:
            d_hiddens[pos] = np.zeros(H)
        return d_hiddens[pos]

    def issue_ce(W_name, b_name, h, take, pos):
        nonlocal loss
        logits = (params[W_name] @ h + params[b_name]).reshape(N_ISSUES, -1)
        masks = issue_masks(arch, prep.scenario.counts)
        dlog = np.zeros_like(logits) if want_grad else None
        for k in range(N_ISSUES):
            p = masked_softmax(logits[k], masks[k])
            loss += _ce(p, take[k])
            if want_grad:
                dlog[k] = p
                dlog[k][take[k]] -= 1.0
        if want_grad:
            flat = dlog.reshape(-1)
            grads[W_name] += np.outer(flat, h)
            grads[b_name] += flat
            dh_at(pos)[:] += params[W_name].T @ flat

    for pos, ki, mask, take in prep.sup_points:
        h = enc.hiddens[pos]
        p = masked_softmax(params["Wact"] @ h + params["bact"], mask)
        loss += _ce(p, ki)
        if want_grad:
            dlogits = p.copy()
            dlogits[ki] -= 1.0
            grads["Wact"] += np.outer(dlogits, h)
            grads["bact"] += dlogits
            dh_at(pos)[:] += params["Wact"].T @ dlogits
        if take is not None:
            issue_ce("Wprop", "bprop", h, take, pos)
    if prep.output_target is not None:
        pos = len(prep.acts)
        issue_ce("Wout", "bout", enc.hiddens[pos], prep.output_target, pos)
    if want_grad and d_hiddens:
        enc.backward(d_hiddens, grads)
    return loss


@dataclass
class SupervisedHParams:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1.0
    grad_clip: float = 0.5
    anneal_factor: float = 5.0
    min_lr: float = 1e-4
    val_fraction: float = 0.1
    seed: int = 0


def dataset_loss(params, arch, prepared) -> float:
    total = sum(example_loss_grad(params, arch, p) for p in prepared)
    terms = sum(p.n_terms for p in prepared)
    return total / max(terms, 1)


def supervised_train(policy: Policy, examples, hp: SupervisedHParams):
    """Batched SGD on the joint loss with norm clipping and plateau annealing.

    Returns (trained policy, loss curve). The loss curve rows carry epoch
    train/validation losses and the learning rate in effect.
    """
    prepared = [p for ex in examples if (p := prepare_example(ex, policy.arch)) is not None]
    if not prepared:
        raise DataError("no usable training examples")
    rng = np.random.default_rng(hp.seed)
    idx = rng.permutation(len(prepared))
    n_val = max(1, int(hp.val_fraction * len(prepared))) if len(prepared) > 10 else 0
    val = [prepared[i] for i in idx[:n_val]]
    train = [prepared[i] for i in idx[n_val:]]
    params = {k: v.copy() for k, v in policy.params.items()}
    arch = policy.arch

    init_train_loss = dataset_loss(params, arch, train)
    best_val = float("inf")
    annealing = False
    lr = hp.lr
    curve = []
    for epoch in range(hp.epochs):
        if annealing:
            lr /= hp.anneal_factor
        if lr < hp.min_lr:
            break
        order = rng.permutation(len(train))
        running_loss = 0.0
        running_terms = 0
        for start in range(0, len(order), hp.batch_size):
            batch = [train[i] for i in order[start : start + hp.batch_size]]
            grads = zeros_like_params(params)
            batch_loss = 0.0
            terms = 0
            for prep in batch:
                batch_loss += example_loss_grad(params, arch, prep, grads)
                terms += prep.n_terms
            for g in grads.values():
                g /= terms
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            clip_gradient(grads, hp.grad_clip)
            for name in params:
                params[name] -= lr * grads[name]
            running_loss += batch_loss
            running_terms += terms
        train_loss = running_loss / max(running_terms, 1)
        val_loss = dataset_loss(params, arch, val) if val else train_loss
        curve.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr}
        )
        if val_loss < best_val - 1e-6:
            best_val = val_loss
        else:
            annealing = True
    final_train_loss = dataset_loss(params, arch, train)
    if not final_train_loss < init_train_loss:
        raise TrainingError(
            f"training did not reduce loss ({init_train_loss:.4f} -> {final_train_loss:.4f})"
        )
    trained = Policy(params, arch, dict(policy.meta))
    return trained, curve


# ── evaluation helpers ────────────────────────────────────────────────


def next_act_accuracy(policy: Policy, examples) -> float:
    """Fraction of supervised turns whose argmax act (kind and shares) matches."""
    hits = 0
    total = 0
    for ex in examples:
        prep = prepare_example(ex, policy.arch)
        if prep is None or not prep.sup_points:
            continue
        enc = RunningEncoder(policy.params, prep.scenario, Speaker.A)
        hiddens = [enc.h]
        for act in prep.acts:
            hiddens.append(enc.push(act))
        for pos, ki, mask, take in prep.sup_points:
            h = hiddens[pos]
            logits = policy.params["Wact"] @ h + policy.params["bact"]
            pred = int(np.argmax(np.where(mask, logits, _NEG_INF)))
            ok = pred == ki
            if ok and take is not None:
                probs = _head_probs(
                    policy.params["Wprop"], policy.params["bprop"], h, policy.arch,
                    prep.scenario.counts,
                )
                ok = all(int(np.argmax(probs[k])) == take[k] for k in range(N_ISSUES))
            hits += ok
            total += 1
    return hits / total if total else 0.0


def output_deal_accuracy(policy: Policy, examples) -> float:
    """Fraction of agreed dialogues whose argmax output deal matches the record."""
    hits = 0
    total = 0
    for ex in examples:
        if ex.output_target is None or not ex.acts or ex.acts[-1].kind is not ActKind.SELECT:
            continue
        _, div = policy.predict_output_deal(ex.scenario, Speaker.A, ex.acts)
        hits += div.take == ex.output_target.take
        total += 1
    return hits / total if total else 0.0
