"""Deep Q-learning on the survey environment: experience replay (FIFO ring),
a periodically synced target network, epsilon-greedy exploration with linear
annealing, and a linearly annealed Adam learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .dataprep import BalancedSampler, Dataset, encode_state
from .environment import (
    EnvConfig,
    action_from_id,
    episode_return,
    reset,
    step,
    valid_action_ids,
)
from .errors import DivergenceError
from .evaluation import run_episode
from .neuralnet import (
    AdamState,
    Network,
    adam_step,
    agent_arch,
    backward,
    forward,
    init_weights,
    linear_anneal,
    td_loss,
)
from .policies import GreedyQPolicy


@dataclass(frozen=True)
class Transition:
    """One environment step: (s, a, r, s', terminal)."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring holding the most recent transitions; eviction is
    strictly FIFO. Iteration yields survivors in insertion order."""

    def __init__(self, capacity: int = 5000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0
        self.pushes = 0

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
            self._next = (self._next + 1) % self.capacity
        self.pushes += 1

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Transition]:
        if len(self._items) < self.capacity:
            return iter(list(self._items))
        return iter(self._items[self._next:] + self._items[:self._next])

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sample with replacement (n may exceed the buffer size)."""
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class DqnConfig:
    total_steps: int = 100_000
    minibatch: int = 32
    lr_start: float = 0.00025
    lr_end: float = 0.00005
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_horizon: int = 50_000
    buffer_capacity: int = 5000
    target_sync_every: int = 500   # gradient steps between target refreshes
    learn_start: int = 1000        # transitions gathered before learning
    mask_valid: bool = False       # mask the behavior policy (penalties teach otherwise)
    eval_every: int = 1000         # environment steps between greedy evaluations
    eval_episodes: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.learn_start < self.minibatch:
            raise ValueError("learn_start must cover at least one minibatch")
        if self.eps_horizon > self.total_steps:
            raise ValueError("eps_horizon cannot exceed total_steps")


def epsilon_greedy(q_values: np.ndarray, valid_ids: Sequence[int], eps: float,
                   rng: np.random.Generator) -> int:
    """With probability eps a uniform valid action, otherwise the valid argmax
    (ties to the lowest action id)."""
    if len(valid_ids) == 0:
        raise ValueError("no valid actions to choose from")
    if rng.random() < eps:
        return int(valid_ids[int(rng.integers(len(valid_ids)))])
    ids = np.asarray(valid_ids)
    return int(ids[int(np.argmax(q_values[ids]))])


def compute_targets(batch: Sequence[Transition], target_net: Network,
                    gamma: float) -> np.ndarray:
    """TD targets y = r (terminal) or r + gamma * max_a' Q_target(s', a').

    The max runs over the full action head; the penalty structure, not a mask,
    teaches action validity.
    """
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    terminal = np.array([t.terminal for t in batch], dtype=bool)
    if terminal.all() or gamma == 0.0:
        bootstrap = np.zeros(len(batch))
    else:
        next_states = np.stack([t.next_state for t in batch])
        q_next, _ = forward(target_net, next_states)
        bootstrap = q_next.max(axis=1).astype(np.float64)
    return rewards + np.where(terminal, 0.0, gamma * bootstrap)


def sync_target(online_net: Network) -> Network:
    """Deep copy; later online updates leave the copy untouched."""
    return online_net.copy()


@dataclass
class LogRow:
    """One training-log line; unset fields serialize as empty cells."""

    step: int
    episode_return: float | None = None
    epsilon: float | None = None
    lr: float | None = None
    loss: float | None = None
    eval_return: float | None = None


@dataclass
class TrainingLog:
    """Append-only tab-separated training record."""

    rows: list[LogRow] = field(default_factory=list)

    COLUMNS = ("step", "episode_return", "epsilon", "lr", "loss", "eval_return")

    def append(self, row: LogRow) -> None:
        self.rows.append(row)

    def save(self, path: str | Path) -> None:
        def cell(v):
            return "" if v is None else repr(v)

        lines = ["\t".join(self.COLUMNS)]
        for r in self.rows:
            lines.append("\t".join([
                str(r.step), cell(r.episode_return), cell(r.epsilon),
                cell(r.lr), cell(r.loss), cell(r.eval_return),
            ]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrainingLog":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].split("\t") != list(cls.COLUMNS):
            raise ValueError(f"{path} is not a training log")
        log = cls()
        for line in lines[1:]:
            cells = line.split("\t")
            opt = lambda s: None if s == "" else float(s)
            log.append(LogRow(
                step=int(cells[0]),
                episode_return=opt(cells[1]),
                epsilon=opt(cells[2]),
                lr=opt(cells[3]),
                loss=opt(cells[4]),
                eval_return=opt(cells[5]),
            ))
        return log


def greedy_eval_return(net: Network, env_config: EnvConfig, sampler: BalancedSampler,
                       schema, n_episodes: int, rng: np.random.Generator) -> float:
    """Mean return of the masked greedy policy over freshly sampled episodes."""
    policy = GreedyQPolicy(net, env_config, schema, masked=True)
    total = 0.0
    for _ in range(n_episodes):
        outcome = run_episode(policy, sampler.draw(rng), env_config)
        total += outcome.ret
    return total / n_episodes


def train_dqn(config: DqnConfig, env_config: EnvConfig,
              train_data: Dataset) -> tuple[Network, TrainingLog]:
    """Full Q-learning run; see DqnConfig for the schedule constants.

    Single-threaded and deterministic per seed: every random draw flows from
    one seed sequence (weight init, episode records, exploration/minibatches,
    and the periodic greedy evaluations each get an independent spawned
    stream).
    """
    schema = train_data.schema
    init_ss, env_ss, policy_ss, eval_ss = np.random.SeedSequence(config.seed).spawn(4)
    env_rng = np.random.default_rng(env_ss)
    policy_rng = np.random.default_rng(policy_ss)
    eval_rng = np.random.default_rng(eval_ss)

    arch = agent_arch(
        m=train_data.num_features,
        c_in=train_data.max_categories,
        n_actions=env_config.n_actions,
    )
    net = init_weights(arch, seed=init_ss)
    target = sync_target(net)
    adam = AdamState.init_like(net)
    buffer = ReplayBuffer(config.buffer_capacity)
    sampler = BalancedSampler(train_data, n_classes=env_config.n_classes)
    log = TrainingLog()

    all_ids = list(range(env_config.n_actions))
    state = reset(sampler.draw(env_rng), env_config)
    rewards: list[float] = []
    grad_steps = 0
    last_loss: float | None = None

    for env_step_i in range(config.total_steps):
        eps = linear_anneal(config.eps_start, config.eps_end, env_step_i,
                            config.eps_horizon)
        lr = linear_anneal(config.lr_start, config.lr_end, env_step_i,
                           config.total_steps)

        obs = encode_state(schema, state.answered)
        q, _ = forward(net, obs)
        valid = (valid_action_ids(state.queries_made, env_config)
                 if config.mask_valid else all_ids)
        action_id = epsilon_greedy(q, valid, eps, policy_rng)
        state, reward, terminal = step(state, action_from_id(action_id, env_config))
        next_obs = encode_state(schema, state.answered)
        buffer.push(Transition(obs, action_id, reward, next_obs, terminal))
        rewards.append(reward)

        if len(buffer) >= config.learn_start:
            batch = buffer.sample(config.minibatch, policy_rng)
            targets = compute_targets(batch, target, env_config.gamma)
            states = np.stack([t.state for t in batch])
            actions = np.array([t.action for t in batch])
            outs, cache = forward(net, states)
            taken = outs[np.arange(len(batch)), actions]
            losses, err_grads = td_loss(taken, targets)
            last_loss = float(np.mean(losses))
            if not np.isfinite(last_loss):
                raise DivergenceError(
                    f"non-finite TD loss at step {env_step_i} (lr={lr}, eps={eps})"
                )
            out_grad = np.zeros_like(outs)
            out_grad[np.arange(len(batch)), actions] = (
                err_grads / len(batch)
            ).astype(outs.dtype)
            grads = backward(net, cache, out_grad)
            adam_step(net, adam, grads, lr)
            grad_steps += 1
            if grad_steps % config.target_sync_every == 0:
                target = sync_target(net)

        if terminal:
            log.append(LogRow(step=env_step_i + 1,
                              episode_return=episode_return(rewards),
                              epsilon=eps, lr=lr, loss=last_loss))
            state = reset(sampler.draw(env_rng), env_config)
            rewards = []

        if (env_step_i + 1) % config.eval_every == 0:
            eval_ret = greedy_eval_return(net, env_config, sampler, schema,
                                          config.eval_episodes, eval_rng)
            log.append(LogRow(step=env_step_i + 1, epsilon=eps, lr=lr,
                              loss=last_loss, eval_return=eval_ret))

    return net, log
