"""Score any policy on balanced test episodes, and render the comparison table
(accuracy / average queries / average episode reward).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .dataprep import Dataset, Record, balanced_sample
from .environment import EnvConfig, episode_return, format_trace_row, reset, step
from .policies import Policy


@dataclass(frozen=True)
class Metrics:
    """Aggregates over a batch of completed episodes.

    accuracy counts an episode as correct only when it ended with a correct
    prediction; constraint violations therefore score as incorrect. Values are
    kept at full precision; rounding happens only at presentation.
    """

    accuracy: float
    avg_queries: float
    avg_return: float
    n_episodes: int
    violation_count: int

    def identity_gap(self, cost: float = 0.05) -> float:
        """Distance from the reward-accounting identity
        avg_return = (2 * accuracy - 1) - cost * avg_queries,
        exact by construction of the reward scheme."""
        return abs(self.avg_return - ((2.0 * self.accuracy - 1.0) - cost * self.avg_queries))


@dataclass(frozen=True)
class EpisodeOutcome:
    rewards: tuple[float, ...]
    queries: int
    correct: bool
    violation: bool

    @property
    def ret(self) -> float:
        return episode_return(self.rewards)


def run_episode(policy: Policy, record: Record, config: EnvConfig,
                max_actions: int | None = None, episode_id: int = 0,
                trace: IO[str] | None = None) -> EpisodeOutcome:
    """Drive one greedy episode of a deterministic policy.

    With `trace` set, writes one tab-separated debugging line per step:
    episode id, t, action, reward, terminal.
    """
    state = reset(record, config)
    rewards: list[float] = []
    limit = (config.kmax + 1) if max_actions is None else max_actions
    for t in range(limit):
        action = policy.act(state.answered, state.queries_made)
        state, reward, terminal = step(state, action)
        rewards.append(reward)
        if trace is not None:
            trace.write(format_trace_row(episode_id, t, action, reward, terminal) + "\n")
        if terminal:
            break
    else:
        raise AssertionError("episode failed to terminate within the action bound")
    correct = state.prediction is not None and state.prediction == record.label
    return EpisodeOutcome(tuple(rewards), state.queries_made, correct, state.violation)


def evaluate(policy: Policy, test_data: Dataset, config: EnvConfig,
             n_episodes: int = 2000, seed: int = 0,
             trace: IO[str] | None = None) -> Metrics:
    """Greedy evaluation on n_episodes balanced-resampled test records.

    Deterministic given (policy, seed): records are drawn once and episodes
    are accumulated in index order.
    """
    rng = np.random.default_rng(seed)
    records = balanced_sample(test_data, n_episodes, rng)
    total_return = 0.0
    total_queries = 0
    n_correct = 0
    n_violations = 0
    for episode_id, record in enumerate(records):
        outcome = run_episode(policy, record, config, episode_id=episode_id,
                              trace=trace)
        total_return += outcome.ret
        total_queries += outcome.queries
        n_correct += int(outcome.correct)
        n_violations += int(outcome.violation)
    n = len(records)
    return Metrics(
        accuracy=n_correct / n,
        avg_queries=total_queries / n,
        avg_return=total_return / n,
        n_episodes=n,
        violation_count=n_violations,
    )


# ---------------------------------------------------------------------------
# presentation
# ---------------------------------------------------------------------------

_COLUMNS = ("Model", "Accuracy", "Avg. Queries", "Avg. Episode Reward")


def results_table(rows: Sequence[tuple[str, Metrics]]) -> str:
    """Aligned text table, two-decimal presentation (rewards keep their sign)."""
    cells = [list(_COLUMNS)]
    for name, m in rows:
        cells.append(
            [name, f"{m.accuracy:.2f}", f"{m.avg_queries:.2f}", f"{m.avg_return:+.2f}"]
        )
    widths = [max(len(row[i]) for row in cells) for i in range(len(_COLUMNS))]
    lines = []
    for row in cells:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def parse_results_table(text: str) -> list[tuple[str, float, float, float]]:
    """Invert results_table back into (name, accuracy, queries, reward) rows."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(_COLUMNS[0]):
        raise ValueError("not a results table")
    rows = []
    for line in lines[1:]:
        parts = [p for p in line.split("  ") if p.strip()]
        if len(parts) != 4:
            raise ValueError(f"unparseable table row: {line!r}")
        name, acc, queries, reward = (p.strip() for p in parts)
        rows.append((name, float(acc), float(queries), float(reward)))
    return rows


def results_tsv(rows: Sequence[tuple[str, Metrics]]) -> str:
    """Machine-readable full-precision rows for CI assertions."""
    out = ["model\taccuracy\tavg_queries\tavg_return\tn_episodes\tviolations"]
    for name, m in rows:
        out.append(
            f"{name}\t{m.accuracy!r}\t{m.avg_queries!r}\t{m.avg_return!r}"
            f"\t{m.n_episodes}\t{m.violation_count}"
        )
    return "\n".join(out) + "\n"
