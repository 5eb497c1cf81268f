"""Inequity-aversion utility and the personality preset grid.

The utility of player i given points x = (x_i, x_j) is

    U_i(x) = x_i - a * max(0, x_j - x_i) - b * max(0, x_i - x_j)

where ``a`` penalizes disadvantageous gaps and ``b`` advantageous ones.
Varying (a, b) yields the preset personalities used for training rewards.
"""

from __future__ import annotations

from dataclasses import dataclass

from .env import Outcome, Speaker
from .errors import ConfigError

# Canonical constraint on the coefficients: b <= a and 0 <= b < 1.
# The envious preset (b = -1) deliberately sits outside it; such configs
# are allowed but flagged so downstream tooling can surface them.


@dataclass(frozen=True)
class RewardConfig:
    a: float
    b: float
    name: str = ""

    @property
    def outside_fs_constraint(self) -> bool:
        return not (self.b <= self.a and 0.0 <= self.b < 1.0)


PRESETS: dict[str, RewardConfig] = {
    "selfish": RewardConfig(a=0.0, b=0.0, name="selfish"),
    "disadvantage_averse": RewardConfig(a=1.0, b=0.0, name="disadvantage_averse"),
    "envious": RewardConfig(a=0.0, b=-1.0, name="envious"),
    "fair": RewardConfig(a=0.75, b=0.75, name="fair"),
}


def preset(name: str) -> RewardConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown reward preset {name!r}; known: {sorted(PRESETS)}"
        ) from None


def fehr_schmidt_utility(x_i: float, x_j: float, cfg: RewardConfig) -> float:
    return x_i - cfg.a * max(0.0, x_j - x_i) - cfg.b * max(0.0, x_i - x_j)


def reward_for_outcome(outcome: Outcome, role: Speaker, cfg: RewardConfig) -> float:
    """Training reward for one side of a terminal outcome.

    Any non-agreement (cutoff, walkaway, mismatched deals) is worth 0
    regardless of personality.
    """
    if not outcome.is_agreement:
        return 0.0
    own = outcome.points_a if role is Speaker.A else outcome.points_b
    other = outcome.points_b if role is Speaker.A else outcome.points_a
    return fehr_schmidt_utility(float(own), float(other), cfg)


def resolve_reward_config(spec: str | dict | RewardConfig) -> RewardConfig:
    """Accept a preset name or an explicit {a, b[, name]} mapping."""
    if isinstance(spec, RewardConfig):
        return spec
    if isinstance(spec, str):
        return preset(spec)
    if isinstance(spec, dict):
        if "preset" in spec:
            return preset(spec["preset"])
        try:
            return RewardConfig(
                a=float(spec["a"]), b=float(spec["b"]), name=str(spec.get("name", ""))
            )
        except KeyError as e:
            raise ConfigError(f"reward config needs 'a' and 'b' (missing {e})") from None
    raise ConfigError(f"cannot interpret reward config: {spec!r}")
