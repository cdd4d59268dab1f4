"""Core MDP abstractions shared by the simulator, the agents, and the harness.

Observations are flat float64 vectors with a fixed, documented field order;
actions are float64 vectors even for discrete agents (the agent owns any
index-to-vector mapping).  Environments are episodic: ``reset(seed)`` starts
a fresh episode and ``step(action)`` advances exactly one decision point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np


class StepAfterDone(RuntimeError):
    """step() was called on an environment that is not in a live episode."""


@dataclass
class StepResult:
    """One environment transition as seen by the agent.

    ``info`` carries raw diagnostic state variables and, for the mixed
    task, the per-component rewards (keys ``r_fert`` and ``r_irr``).
    """

    observation: np.ndarray
    reward: float
    done: bool
    info: dict[str, float] = field(default_factory=dict)


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass
class Trajectory:
    """A full episode.  ``infos`` holds the per-step info dicts (optional)."""

    transitions: list[Transition] = field(default_factory=list)
    infos: list[dict[str, float]] = field(default_factory=list)

    @property
    def cumulative_reward(self) -> float:
        total = 0.0
        for t in self.transitions:
            total += t.reward
        return total

    def rewards(self) -> list[float]:
        return [t.reward for t in self.transitions]

    def __len__(self) -> int:
        return len(self.transitions)


@dataclass(frozen=True)
class ActionSpace:
    """Box bounds plus an optional enumerated discrete action set.

    ``actions`` is None for a continuous box; otherwise it is the tuple of
    allowed action vectors and ``kind`` reports ``discrete-set``.
    """

    low: np.ndarray
    high: np.ndarray
    actions: tuple[np.ndarray, ...] | None = None

    def __post_init__(self) -> None:
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        if low.shape != high.shape:
            raise ValueError("low/high shape mismatch")
        if np.any(low > high):
            raise ValueError("requires low <= high elementwise")
        if self.actions is not None:
            if len(self.actions) == 0:
                raise ValueError("discrete action set must be non-empty")
            acts = tuple(np.asarray(a, dtype=np.float64) for a in self.actions)
            object.__setattr__(self, "actions", acts)
            for a in acts:
                if a.shape != low.shape:
                    raise ValueError("discrete action dimension mismatch")
                if np.any(a < low) or np.any(a > high):
                    raise ValueError("discrete action outside box bounds")

    @property
    def kind(self) -> str:
        return "continuous-box" if self.actions is None else "discrete-set"

    @property
    def dim(self) -> int:
        return int(self.low.shape[0])

    def clip(self, action: np.ndarray) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(self.low.shape)
        a = np.where(np.isfinite(a), a, 0.0)
        return np.clip(a, self.low, self.high)

    def contains(self, action: np.ndarray) -> bool:
        a = np.asarray(action, dtype=np.float64)
        if a.shape != self.low.shape:
            return False
        return bool(np.all(a >= self.low) and np.all(a <= self.high))


class Environment:
    """Episodic environment interface.

    Subclasses set ``action_space`` and ``observation_dim`` and implement
    ``reset``/``step``.  Identical seeds must yield bit-identical episodes
    under identical action sequences, across runs and process restarts.
    """

    action_space: ActionSpace
    observation_dim: int

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: np.ndarray) -> StepResult:
        raise NotImplementedError


class Policy(Protocol):
    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Sum of gamma**t * r_t.  gamma=1.0 reduces to the plain episode sum.

    Accumulates left to right so that the undiscounted case is exactly
    equal to ``Trajectory.cumulative_reward``.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    total = 0.0
    factor = 1.0
    for r in rewards:
        if not np.isfinite(r):
            raise ValueError("rewards must be finite")
        total += factor * r
        factor *= gamma
    return total


def rollout(
    env: Environment,
    policy: Policy,
    seed: int,
    rng: np.random.Generator,
    max_steps: int = 400,
) -> Trajectory:
    """Run one episode of ``policy`` in ``env`` and record it."""
    obs = env.reset(seed)
    traj = Trajectory()
    for _ in range(max_steps):
        action = np.asarray(policy.act(obs, rng), dtype=np.float64)
        res = env.step(action)
        traj.transitions.append(
            Transition(obs=obs, action=action, reward=res.reward, next_obs=res.observation, done=res.done)
        )
        traj.infos.append(res.info)
        obs = res.observation
        if res.done:
            break
    return traj


def write_trajectories_csv(
    path,
    trajectories: Sequence[Trajectory],
    action_names: Sequence[str] | None = None,
) -> None:
    """One CSV row per step: episode_id, day, action fields, reward, done,
    then one column per info key.  Header row mandatory; UTF-8; '.' decimals.
    """
    info_keys: list[str] = []
    seen: set[str] = set()
    for traj in trajectories:
        for info in traj.infos:
            for k in info:
                if k not in seen:
                    seen.add(k)
                    info_keys.append(k)
    info_keys.sort()
    if trajectories and action_names is None:
        dim = trajectories[0].transitions[0].action.shape[0]
        action_names = [f"action_{i}" for i in range(dim)]
    action_names = list(action_names or [])

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode_id", "day", *action_names, "reward", "done", *info_keys])
        for ep, traj in enumerate(trajectories):
            for day, tr in enumerate(traj.transitions):
                info = traj.infos[day] if day < len(traj.infos) else {}
                row = [ep, day]
                row.extend(repr(float(a)) for a in tr.action)
                row.append(repr(float(tr.reward)))
                row.append(int(tr.done))
                row.extend(repr(float(info[k])) if k in info else "" for k in info_keys)
                writer.writerow(row)


def read_trajectories_csv(path) -> list[dict[str, list]]:
    """Inverse of :func:`write_trajectories_csv`, returned as per-episode
    column dicts (used for round-trip checks and offline analysis)."""
    episodes: dict[int, dict[str, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("missing header row")
        for row in reader:
            ep = int(row["episode_id"])
            cols = episodes.setdefault(ep, {k: [] for k in reader.fieldnames})
            for k in reader.fieldnames:
                cols[k].append(row[k])
    return [episodes[k] for k in sorted(episodes)]
