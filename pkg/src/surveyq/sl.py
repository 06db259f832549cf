"""Fixed-question supervised baseline: reveal the top-k ranked features up
front and train a softmax classifier on balanced draws. The trained classifier
wraps into a non-adaptive episode policy so it can be scored exactly like the
Q-learning agent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataprep import BalancedSampler, Dataset, Record, encode_state
from .environment import EnvConfig
from .errors import DivergenceError
from .dqn import LogRow, TrainingLog
from .neuralnet import (
    AdamState,
    Network,
    adam_step,
    agent_arch,
    backward,
    cross_entropy_loss,
    forward,
    init_weights,
    linear_anneal,
)
from .policies import FixedQueryPolicy


@dataclass(frozen=True)
class SlConfig:
    k: int
    epochs: int = 20
    minibatch: int = 32
    lr_start: float = 0.0025
    lr_end: float = 0.0005
    n_classes: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")


def make_fixed_input(record: Record, k: int, feature_order,
                     schema) -> np.ndarray:
    """Observation with the top-k ranked features revealed, all others zero."""
    answered = {f: record.features[f] for f in feature_order[:k]}
    return encode_state(schema, answered)


def train_sl(config: SlConfig, train_data: Dataset) -> tuple[Network, TrainingLog]:
    """Cross-entropy training over balanced class draws.

    An epoch is one dataset-size pass of balanced samples (the resampling
    precludes a literal sweep of the imbalanced split). The learning rate
    anneals per optimizer step along the continuous epoch fraction, hitting
    the configured endpoints at epochs 0 and `epochs`.
    """
    if config.k > train_data.num_features:
        raise ValueError(
            f"k={config.k} exceeds the {train_data.num_features} available features"
        )
    schema = train_data.schema
    order = train_data.feature_order
    init_ss, sample_ss = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(sample_ss)

    arch = agent_arch(
        m=train_data.num_features,
        c_in=train_data.max_categories,
        n_actions=config.k + config.n_classes,
        out_dim=config.n_classes,
    )
    net = init_weights(arch, seed=init_ss)
    adam = AdamState.init_like(net)
    sampler = BalancedSampler(train_data, n_classes=config.n_classes)
    log = TrainingLog()

    n_train = len(train_data.records)
    batches = [config.minibatch] * (n_train // config.minibatch)
    if n_train % config.minibatch:
        batches.append(n_train % config.minibatch)

    for epoch in range(config.epochs):
        epoch_loss = 0.0
        lr = config.lr_start
        for batch_i, size in enumerate(batches):
            records = [sampler.draw(rng) for _ in range(size)]
            states = np.stack([
                make_fixed_input(r, config.k, order, schema) for r in records
            ])
            labels = np.array([r.label for r in records])
            logits, cache = forward(net, states)
            loss, out_grad = cross_entropy_loss(logits, labels)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss in epoch {epoch}")
            epoch_fraction = epoch + batch_i / len(batches)
            lr = linear_anneal(config.lr_start, config.lr_end, epoch_fraction,
                               config.epochs)
            grads = backward(net, cache, out_grad)
            adam_step(net, adam, grads, lr)
            epoch_loss += loss * size
        log.append(LogRow(step=(epoch + 1) * n_train, lr=lr,
                          loss=epoch_loss / n_train))
    return net, log


def sl_as_policy(net: Network, k: int, feature_order, schema,
                 config: EnvConfig) -> FixedQueryPolicy:
    """Interpret the classifier as a non-adaptive policy: the k fixed queries
    in rank order, then predict the argmax class."""
    return FixedQueryPolicy(net, k, config, schema)


def sl_env_config(k: int, feature_order, **overrides) -> EnvConfig:
    """Environment in which the fixed-k policy is scored: budget k over the
    top-k ranked features."""
    return EnvConfig(kmax=k, allowed_features=tuple(feature_order[:k]), **overrides)
