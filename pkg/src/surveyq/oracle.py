"""Exact optimal policy and value for synthetic distributions by dynamic
programming over answer histories, plus exact evaluation of arbitrary
deterministic policies. This is the independent yardstick the learned agents
are measured against.

Histories record only which features were answered and with what values:
synthetic features are class-conditionally independent, so order carries no
information, and repeated queries are excluded from the optimal search (they
cost without informing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dataprep import SynthSpec
from .environment import Action, EnvConfig
from .errors import DataError
from .policies import Policy

MAX_HISTORIES = 1_000_000

History = tuple[tuple[int, int], ...]  # sorted ((feature, code), ...) pairs


@dataclass(frozen=True)
class BeliefNode:
    """A reachable answer history and the class posterior it induces."""

    answered: History
    posterior: tuple[float, ...]


class _Model:
    """Posterior arithmetic over a synthetic spec."""

    def __init__(self, spec: SynthSpec, config: EnvConfig):
        self.config = config
        prior = np.asarray(spec.class_prior, dtype=float)
        self.prior = prior / prior.sum()
        self.n_classes = len(self.prior)
        if self.n_classes != config.n_classes:
            raise DataError(
                f"spec has {self.n_classes} classes but the environment expects "
                f"{config.n_classes}"
            )
        self.features = spec.features
        for f in config.allowed_features:
            if not 0 <= f < len(spec.features):
                raise DataError(f"allowed feature {f} not present in the spec")
        # class_probs[i][y][v], rows renormalized so equivalent specs agree
        self.class_probs = [
            [np.asarray(row, dtype=float) / sum(row) for row in f.class_probs]
            for f in spec.features
        ]
        count = 1
        for f in config.allowed_features:
            count *= spec.features[f].num_categories + 1
            if count > MAX_HISTORIES:
                raise DataError(
                    f"history space exceeds the {MAX_HISTORIES} bound; "
                    "shrink the spec or the query budget"
                )

    def posterior(self, history: History) -> tuple[np.ndarray, float]:
        """(class posterior, history probability); posterior is unusable when
        the probability is zero."""
        w = self.prior.copy()
        for feature, code in history:
            for y in range(self.n_classes):
                w[y] *= self.class_probs[feature][y][code]
        total = w.sum()
        if total == 0.0:
            return w, 0.0
        return w / total, float(total)

    def answer_prob(self, history: History, feature: int, code: int,
                    posterior: np.ndarray) -> float:
        return float(sum(posterior[y] * self.class_probs[feature][y][code]
                         for y in range(self.n_classes)))


def _with_answer(history: History, feature: int, code: int) -> History:
    return tuple(sorted(history + ((feature, code),)))


def optimal_value(spec: SynthSpec, config: EnvConfig) -> tuple[float, dict[History, Action]]:
    """Bellman recursion over answer histories with known dynamics.

    At each history: predicting class j (legal once min_queries are made) is
    worth the expected correctness reward under the posterior; querying an
    unanswered allowed feature (legal within budget) is worth the query cost
    plus the probability-weighted value of the answer branches. Ties break to
    the lowest action id, matching the environment's convention.
    """
    model = _Model(spec, config)
    cfg = config
    policy: dict[History, Action] = {}
    cache: dict[History, float] = {}

    def value(history: History) -> float:
        if history in cache:
            return cache[history]
        post, _ = model.posterior(history)
        queries = len(history)
        answered = {f for f, _ in history}
        best_val = -math.inf
        best_action = None
        # action ids ascend: query slots first, then predictions
        if queries < cfg.kmax:
            for slot, feature in enumerate(cfg.allowed_features):
                if feature in answered:
                    continue  # legal but strictly dominated
                total = 0.0
                for code in range(spec.features[feature].num_categories):
                    p_ans = model.answer_prob(history, feature, code, post)
                    if p_ans > 0.0:
                        total += p_ans * value(_with_answer(history, feature, code))
                val = cfg.cost_query + total
                if val > best_val:
                    best_val = val
                    best_action = Action("query", slot)
        if queries >= cfg.min_queries:
            for j in range(cfg.n_classes):
                val = post[j] * cfg.r_correct + (1.0 - post[j]) * cfg.r_wrong
                if val > best_val:
                    best_val = val
                    best_action = Action("predict", j)
        cache[history] = best_val
        policy[history] = best_action
        return best_val

    return value(()), policy


class OraclePolicy:
    """Decision-table policy produced by optimal_value."""

    def __init__(self, table: Mapping[History, Action]):
        self.table = dict(table)

    def act(self, answered: Mapping[int, int], queries_made: int) -> Action:
        return self.table[tuple(sorted(answered.items()))]


def policy_value(policy: Policy, spec: SynthSpec, config: EnvConfig) -> float:
    """Exact expected episode return of a deterministic policy: every answer
    branch is enumerated and weighted by the spec's probabilities, with the
    environment's penalty rules applied (no sampling anywhere)."""
    model = _Model(spec, config)
    cfg = config

    def value(history: History, queries_made: int) -> float:
        action = policy.act(dict(history), queries_made)
        if action.kind == "predict":
            if queries_made < cfg.min_queries:
                return cfg.r_wrong
            post, _ = model.posterior(history)
            p = post[action.index]
            return p * cfg.r_correct + (1.0 - p) * cfg.r_wrong
        if queries_made >= cfg.kmax:
            return cfg.r_wrong  # budget violation: no query executes
        feature = cfg.allowed_features[action.index]
        if any(f == feature for f, _ in history):
            # repeat: re-charged, uninformative
            return cfg.cost_query + value(history, queries_made + 1)
        post, _ = model.posterior(history)
        total = 0.0
        for code in range(spec.features[feature].num_categories):
            p_ans = model.answer_prob(history, feature, code, post)
            if p_ans > 0.0:
                total += p_ans * value(_with_answer(history, feature, code),
                                       queries_made + 1)
        return cfg.cost_query + total

    return value((), 0)


def belief_nodes(spec: SynthSpec, config: EnvConfig) -> list[BeliefNode]:
    """All reachable histories with their posteriors (diagnostic helper)."""
    model = _Model(spec, config)
    nodes: list[BeliefNode] = []

    def visit(history: History):
        post, p_hist = model.posterior(history)
        if p_hist == 0.0 and history:
            return
        nodes.append(BeliefNode(history, tuple(float(x) for x in post)))
        if len(history) >= config.kmax:
            return
        answered = {f for f, _ in history}
        for feature in config.allowed_features:
            if feature in answered:
                continue
            for code in range(spec.features[feature].num_categories):
                if model.answer_prob(history, feature, code, post) > 0.0:
                    visit(_with_answer(history, feature, code))

    visit(())
    return nodes


def format_policy_tree(spec: SynthSpec, config: EnvConfig,
                       policy: Mapping[History, Action],
                       history: History = (), indent: int = 0) -> str:
    """Readable decision-tree dump of an oracle policy."""
    model = _Model(spec, config)
    lines = []
    pad = "  " * indent
    action = policy[history]
    post, _ = model.posterior(history)
    if action.kind == "predict":
        lines.append(
            f"{pad}predict class {action.index} "
            f"(posterior {post[action.index]:.4f})"
        )
        return "\n".join(lines)
    feature = config.allowed_features[action.index]
    name = spec.features[feature].name
    lines.append(f"{pad}ask {name!r}")
    for code in range(spec.features[feature].num_categories):
        p_ans = model.answer_prob(history, feature, code, post)
        if p_ans == 0.0:
            continue
        label = spec.features[feature].choice_labels[code] if spec.features[feature].choice_labels else str(code)
        lines.append(f"{pad}= {label} (p={p_ans:.3f}):")
        lines.append(format_policy_tree(spec, config, policy,
                                        _with_answer(history, feature, code),
                                        indent + 1))
    return "\n".join(lines)
