"""The survey decision process: query actions reveal feature values at a small
cost, predict actions end the episode with a correctness reward, and the
timing rules (minimum two queries, query budget) are enforced as penalties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .dataprep import Record
from .errors import ContractViolation


@dataclass(frozen=True)
class EnvConfig:
    """Reward structure and timing constraints of one survey setting.

    allowed_features lists the schema indices the agent may query, best-ranked
    first; its length is the query budget kmax.
    """

    kmax: int
    allowed_features: tuple[int, ...]
    n_classes: int = 2
    cost_query: float = -0.05
    r_correct: float = 1.0
    r_wrong: float = -1.0
    min_queries: int = 2
    gamma: float = 1.0

    def __post_init__(self):
        if self.kmax < self.min_queries:
            raise ValueError(
                f"kmax ({self.kmax}) must allow the minimum of "
                f"{self.min_queries} queries"
            )
        if len(self.allowed_features) != self.kmax:
            raise ValueError(
                f"expected {self.kmax} allowed features, got "
                f"{len(self.allowed_features)}"
            )
        if len(set(self.allowed_features)) != len(self.allowed_features):
            raise ValueError("allowed_features contains duplicates")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")

    @property
    def n_actions(self) -> int:
        return self.kmax + self.n_classes

    def to_dict(self) -> dict:
        return {
            "kmax": self.kmax,
            "allowed_features": list(self.allowed_features),
            "n_classes": self.n_classes,
            "cost_query": self.cost_query,
            "r_correct": self.r_correct,
            "r_wrong": self.r_wrong,
            "min_queries": self.min_queries,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        return cls(
            kmax=d["kmax"],
            allowed_features=tuple(d["allowed_features"]),
            n_classes=d["n_classes"],
            cost_query=d["cost_query"],
            r_correct=d["r_correct"],
            r_wrong=d["r_wrong"],
            min_queries=d["min_queries"],
            gamma=d["gamma"],
        )


@dataclass(frozen=True)
class Action:
    """Either query one allowed feature or predict one class.

    For queries, ``index`` is the slot within allowed_features (which equals
    the action's position in the Q-value head); for predictions it is the
    class index.
    """

    kind: str  # "query" | "predict"
    index: int

    def __post_init__(self):
        if self.kind not in ("query", "predict"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.index < 0:
            raise ValueError(f"action index must be nonnegative, got {self.index}")


def action_to_id(action: Action, config: EnvConfig) -> int:
    """Flat action index: query slots first, then prediction classes."""
    if action.kind == "query":
        if action.index >= config.kmax:
            raise ValueError(f"query slot {action.index} out of range (kmax={config.kmax})")
        return action.index
    if action.index >= config.n_classes:
        raise ValueError(f"class {action.index} out of range (c={config.n_classes})")
    return config.kmax + action.index


def action_from_id(action_id: int, config: EnvConfig) -> Action:
    if not 0 <= action_id < config.n_actions:
        raise ValueError(f"action id {action_id} out of range (n={config.n_actions})")
    if action_id < config.kmax:
        return Action("query", action_id)
    return Action("predict", action_id - config.kmax)


def queried_feature(action: Action, config: EnvConfig) -> int:
    """Schema feature index a query action reveals."""
    if action.kind != "query":
        raise ValueError("not a query action")
    return config.allowed_features[action.index]


@dataclass
class SurveyState:
    """Mutable episode state. The hidden record is never part of the
    observation; agents see only the answered map (via encode_state) and the
    charged query count."""

    record: Record
    config: EnvConfig
    answered: dict[int, int] = field(default_factory=dict)
    queries_made: int = 0
    terminal: bool = False
    last_reward: float = 0.0
    prediction: int | None = None
    violation: bool = False


def reset(record: Record, config: EnvConfig) -> SurveyState:
    """Fresh episode: nothing answered, nothing charged."""
    return SurveyState(record=record, config=config)


def step(state: SurveyState, action: Action) -> tuple[SurveyState, float, bool]:
    """Apply one action. Mutates and returns the state.

    Queries within budget reveal the record's true code and charge the query
    cost (repeats re-charge without new information). A query past the budget,
    or a prediction before the minimum query count, scores as a wrong
    prediction and terminates. Valid predictions terminate with the
    correctness reward.
    """
    if state.terminal:
        raise ContractViolation("step() called on a terminal episode")
    cfg = state.config
    if action.kind == "query":
        if state.queries_made >= cfg.kmax:
            # budget exhausted: the query does not execute and is not charged
            reward = cfg.r_wrong
            state.terminal = True
            state.violation = True
        else:
            feature = queried_feature(action, cfg)
            state.answered[feature] = state.record.features[feature]
            state.queries_made += 1
            reward = cfg.cost_query
    else:
        if state.queries_made < cfg.min_queries:
            reward = cfg.r_wrong
            state.violation = True
        else:
            state.prediction = action.index
            reward = cfg.r_correct if action.index == state.record.label else cfg.r_wrong
        state.terminal = True
    state.last_reward = reward
    return state, reward, state.terminal


def valid_action_ids(queries_made: int, config: EnvConfig) -> list[int]:
    """Action ids that do not trigger a penalty at this point in the episode."""
    ids = []
    if queries_made < config.kmax:
        ids.extend(range(config.kmax))
    if queries_made >= config.min_queries:
        ids.extend(range(config.kmax, config.kmax + config.n_classes))
    return ids


def valid_actions(state: SurveyState, config: EnvConfig | None = None) -> list[Action]:
    cfg = config if config is not None else state.config
    return [action_from_id(i, cfg) for i in valid_action_ids(state.queries_made, cfg)]


def episode_return(rewards: Iterable[float]) -> float:
    """Undiscounted episode return: the plain sum of rewards."""
    return float(sum(rewards))


def format_trace_row(episode_id: int, t: int, action: Action, reward: float,
                     terminal: bool) -> str:
    """One tab-separated episode-trace line for debugging logs."""
    return f"{episode_id}\t{t}\t{action.kind}:{action.index}\t{reward!r}\t{int(terminal)}"
