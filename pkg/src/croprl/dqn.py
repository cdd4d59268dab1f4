"""Q-learning with experience replay, a periodically synced target network,
epsilon-greedy exploration, and the fixed grid discretization of the
continuous management actions (nitrogen in 40 kg/ha steps, water in 6 L/m^2
steps, five levels each).

The training loop is single-threaded: environment, buffer, and network
mutate in lockstep, and all randomness flows through named streams derived
from the run seed, so a seeded run is bit-identical across restarts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import Environment
from .neural import MlpNetwork, OptimizerState, RunningNorm, optimizer_step
from .seeding import stream_int, stream_rng
from .simulator import TaskMode


class BufferUnderfull(RuntimeError):
    """Sampling was requested before the buffer holds a full batch."""


@dataclass(frozen=True)
class DqnConfig:
    gamma: float = 0.99
    episodes: int = 4000
    learning_rate: float = 1e-5
    batch_size: int = 1024
    target_sync_every: int = 200      # gradient steps between target syncs
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_frac: float = 0.5   # fraction of training over which epsilon anneals
    buffer_capacity: int = 100_000
    hidden_sizes: tuple[int, ...] = (256, 256, 256)
    update_every: int = 1             # env steps per gradient step
    grad_clip_norm: float | None = None
    normalize_obs: bool = True
    max_episode_steps: int = 400

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("epsilon schedule must satisfy 0 <= end <= start <= 1")
        if self.target_sync_every < 1:
            raise ValueError("target_sync_every must be >= 1")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("need buffer_capacity >= batch_size >= 1")

    def epsilon(self, episode: int) -> float:
        horizon = max(1.0, self.epsilon_decay_frac * self.episodes)
        frac = min(1.0, episode / horizon)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


def action_table(mode: TaskMode | str) -> np.ndarray:
    """Discrete action grid: {40i kg/ha} x {6j L/m^2}, i,j in 0..4.

    Single-input tasks use only their own axis (5 actions); the mixed task
    uses the full product in i-major order (25 actions).
    """
    mode = TaskMode(mode)
    n_levels = np.arange(5) * 40.0
    w_levels = np.arange(5) * 6.0
    if mode == TaskMode.FERTILIZATION:
        return n_levels[:, None].copy()
    if mode == TaskMode.IRRIGATION:
        return w_levels[:, None].copy()
    table = np.array([[n, w] for n in n_levels for w in w_levels])
    return table


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray       # indices into the action table
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO ring over (obs, action index, r, obs', done)."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.insertions = 0

    def __len__(self) -> int:
        return min(self.insertions, self.capacity)

    def insert(self, obs, action: int, reward: float, next_obs, done: bool) -> None:
        i = self.insertions % self.capacity
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = done
        self.insertions += 1

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        size = len(self)
        if size < batch_size:
            raise BufferUnderfull(f"buffer holds {size} < batch size {batch_size}")
        idx = rng.choice(size, size=batch_size, replace=False)
        return Batch(
            obs=self.obs[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            next_obs=self.next_obs[idx],
            dones=self.dones[idx],
        )


def select_action(
    q_net: MlpNetwork,
    obs_norm: np.ndarray,
    epsilon: float,
    n_actions: int,
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy index; argmax ties break to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(q_net.forward(obs_norm)))


def compute_targets(batch: Batch, target_net: MlpNetwork, gamma: float) -> np.ndarray:
    """y = r for terminal transitions, else r + gamma * max_a' Q_target(s')."""
    if batch.obs.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    next_q = target_net.forward(batch.next_obs)
    bootstrap = next_q.max(axis=1)
    return batch.rewards + gamma * bootstrap * (~batch.dones)


@dataclass
class DqnAgent:
    """Q-network, frozen target copy, optimizer, and normalization stats."""

    q_net: MlpNetwork
    target_net: MlpNetwork
    table: np.ndarray
    normalizer: RunningNorm
    opt: OptimizerState
    cfg: DqnConfig
    updates: int = 0

    @classmethod
    def create(cls, obs_dim: int, table: np.ndarray, cfg: DqnConfig, seed: int) -> "DqnAgent":
        sizes = (obs_dim, *cfg.hidden_sizes, len(table))
        q_net = MlpNetwork.init(sizes, "relu", stream_rng("dqn-init", seed))
        return cls(
            q_net=q_net,
            target_net=q_net.copy(),
            table=np.asarray(table, dtype=np.float64),
            normalizer=RunningNorm(obs_dim, enabled=cfg.normalize_obs),
            opt=OptimizerState(kind="adam", learning_rate=cfg.learning_rate, clip_norm=cfg.grad_clip_norm),
            cfg=cfg,
        )

    def update(self, batch: Batch) -> float:
        """One gradient step on the batch mean squared Bellman error.

        Only the taken action's Q-output receives gradient.  The target
        network is synced every ``target_sync_every`` calls.
        """
        obs_n = np.stack([self.normalizer.normalize(o) for o in batch.obs])
        next_n = np.stack([self.normalizer.normalize(o) for o in batch.next_obs])
        targets = compute_targets(
            Batch(obs_n, batch.actions, batch.rewards, next_n, batch.dones),
            self.target_net,
            self.cfg.gamma,
        )
        q_all, cache = self.q_net.forward_cache(obs_n)
        rows = np.arange(len(batch.actions))
        err = q_all[rows, batch.actions] - targets
        loss = float(np.mean(err**2))
        out_grad = np.zeros_like(q_all)
        out_grad[rows, batch.actions] = 2.0 * err / len(err)
        grads = self.q_net.backward(cache, out_grad)
        optimizer_step(self.q_net.params(), grads, self.opt)
        self.updates += 1
        if self.updates % self.cfg.target_sync_every == 0:
            self.target_net = self.q_net.copy()
        return loss

    def greedy_action(self, obs: np.ndarray) -> np.ndarray:
        idx = int(np.argmax(self.q_net.forward(self.normalizer.normalize(obs))))
        return self.table[idx].copy()


@dataclass
class CurveRow:
    episode: int
    cumulative_reward: float
    epsilon: float
    loss_mean: float


@dataclass
class DqnResult:
    agent: DqnAgent
    curve: list[CurveRow] = field(default_factory=list)

    def episode_rewards(self) -> list[float]:
        return [row.cumulative_reward for row in self.curve]


def train_dqn(env_factory, cfg: DqnConfig, seed: int, mode: TaskMode | str | None = None) -> DqnResult:
    """Run the full training loop and return the agent plus the training curve.

    ``mode`` selects the action table; when None the environment must expose
    a discrete action set whose vectors are used directly.
    """
    env: Environment = env_factory()
    if mode is not None:
        table = action_table(mode)
    elif env.action_space.actions is not None:
        table = np.stack(env.action_space.actions)
    else:
        raise ValueError("mode is required for continuous-action environments")
    agent = DqnAgent.create(env.observation_dim, table, cfg, seed)

    explore_rng = stream_rng("dqn-explore", seed)
    sample_rng = stream_rng("dqn-sample", seed)
    buffer = ReplayBuffer(cfg.buffer_capacity, env.observation_dim)

    result = DqnResult(agent=agent)
    step_count = 0
    for episode in range(cfg.episodes):
        obs = env.reset(stream_int("dqn-env", seed, episode))
        agent.normalizer.update(obs)
        epsilon = cfg.epsilon(episode)
        ep_reward = 0.0
        losses: list[float] = []
        for _ in range(cfg.max_episode_steps):
            idx = select_action(
                agent.q_net, agent.normalizer.normalize(obs), epsilon, len(table), explore_rng
            )
            res = env.step(table[idx])
            buffer.insert(obs, idx, res.reward, res.observation, res.done)
            agent.normalizer.update(res.observation)
            ep_reward += res.reward
            step_count += 1
            if len(buffer) >= cfg.batch_size and step_count % cfg.update_every == 0:
                losses.append(agent.update(buffer.sample(sample_rng, cfg.batch_size)))
            obs = res.observation
            if res.done:
                break
        loss_mean = float(np.mean(losses)) if losses else float("nan")
        result.curve.append(CurveRow(episode, ep_reward, epsilon, loss_mean))
    return result


@dataclass(frozen=True)
class DqnPolicy:
    """Greedy policy over a trained Q-network with frozen normalization."""

    q_net: MlpNetwork
    table: np.ndarray
    normalizer: RunningNorm

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = int(np.argmax(self.q_net.forward(self.normalizer.normalize(obs))))
        return self.table[idx].copy()


def policy_from_agent(agent: DqnAgent) -> DqnPolicy:
    return DqnPolicy(q_net=agent.q_net.copy(), table=agent.table.copy(), normalizer=agent.normalizer)
