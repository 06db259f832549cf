"""Episode policies: deterministic maps from (answered values, charged query
count) to the next action. Shared by evaluation, the exact-value oracle, and
the live questionnaire service.
"""

from __future__ import annotations

from typing import Mapping, Protocol, Sequence

import numpy as np

from .dataprep import FeatureSchema, encode_state
from .environment import Action, EnvConfig, action_from_id, valid_action_ids
from .neuralnet import Network, forward


class Policy(Protocol):
    def act(self, answered: Mapping[int, int], queries_made: int) -> Action: ...


class GreedyQPolicy:
    """Argmax over Q-values, ties to the lowest action id.

    With masking on (the default, used for evaluation and serving) the argmax
    is restricted to actions that cannot trigger a penalty; with masking off
    the full head competes, as during training.
    """

    def __init__(self, net: Network, config: EnvConfig,
                 schema: Sequence[FeatureSchema], masked: bool = True):
        self.net = net
        self.config = config
        self.schema = tuple(schema)
        self.masked = masked

    def q_values(self, answered: Mapping[int, int]) -> np.ndarray:
        state = encode_state(self.schema, answered)
        out, _ = forward(self.net, state)
        return out

    def prediction_scores(self, answered: Mapping[int, int]) -> np.ndarray:
        """Q-values of the prediction actions (the last c outputs of the head)."""
        return self.q_values(answered)[self.config.kmax:]

    def act(self, answered: Mapping[int, int], queries_made: int) -> Action:
        q = self.q_values(answered)
        if self.masked:
            ids = valid_action_ids(queries_made, self.config)
        else:
            ids = list(range(self.config.n_actions))
        best = ids[int(np.argmax(q[ids]))]
        return action_from_id(best, self.config)


class FixedQueryPolicy:
    """Non-adaptive policy: ask the k fixed top-ranked questions in order, then
    predict with the classifier's argmax. The environment must allow exactly
    those k features (kmax = k)."""

    def __init__(self, net: Network, k: int, config: EnvConfig,
                 schema: Sequence[FeatureSchema]):
        if config.kmax != k:
            raise ValueError(
                f"fixed policy with k={k} needs an environment with kmax={k}, "
                f"got kmax={config.kmax}"
            )
        self.net = net
        self.k = k
        self.config = config
        self.schema = tuple(schema)

    def prediction_scores(self, answered: Mapping[int, int]) -> np.ndarray:
        state = encode_state(self.schema, answered)
        out, _ = forward(self.net, state)
        return out

    def act(self, answered: Mapping[int, int], queries_made: int) -> Action:
        if queries_made < self.k:
            return Action("query", queries_made)
        logits = self.prediction_scores(answered)
        return Action("predict", int(np.argmax(logits)))
