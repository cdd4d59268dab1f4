"""Small exactly-solvable environments used to verify the learners.

``ChainEnv`` is a four-cell gridworld chain with one-hot observations and
two actions (stay / advance); its optimal Q-function is available from the
tabular value-iteration solver below, which the DQN tests use as an oracle.
``TwoArmBanditEnv`` is a one-step continuous-action task paying 1.0 for
positive actions and 0.0 otherwise, used to verify that the Gaussian policy
moves its mass onto the better arm.
"""

from __future__ import annotations

import numpy as np

from .mdp import ActionSpace, Environment, StepAfterDone, StepResult


def value_iteration(
    rewards: np.ndarray,
    next_states: np.ndarray,
    terminal: np.ndarray,
    gamma: float,
    tol: float = 1e-10,
    max_iters: int = 100_000,
) -> np.ndarray:
    """Optimal Q for a deterministic tabular MDP.

    rewards[s, a] and next_states[s, a] describe the transition table;
    ``terminal[s]`` marks absorbing states (no bootstrapping out of them).
    Iterates the Bellman optimality backup until the sup-norm change is
    below ``tol``.
    """
    n_states, n_actions = rewards.shape
    q = np.zeros((n_states, n_actions))
    for _ in range(max_iters):
        v = q.max(axis=1)
        new_q = np.empty_like(q)
        for s in range(n_states):
            for a in range(n_actions):
                ns = next_states[s, a]
                bootstrap = 0.0 if terminal[ns] else v[ns]
                new_q[s, a] = rewards[s, a] + gamma * bootstrap
        if np.max(np.abs(new_q - q)) < tol:
            return new_q
        q = new_q
    raise RuntimeError("value iteration did not converge")


class ChainEnv(Environment):
    """Four-cell chain: advance (a=1) moves right, stay (a=0) does nothing.

    Advancing into the last cell pays 1.0, any other advance pays 0.2, and
    staying pays 0.0, so with gamma=0.9 the optimal policy is to always
    advance.  Episodes are capped at ``max_steps``.
    """

    N_STATES = 4
    REWARD_ADVANCE = 0.2
    REWARD_GOAL = 1.0

    def __init__(self, max_steps: int = 20):
        self.max_steps = max_steps
        self.action_space = ActionSpace(
            np.array([0.0]), np.array([1.0]), actions=(np.array([0.0]), np.array([1.0]))
        )
        self.observation_dim = self.N_STATES
        self._live = False

    def reset(self, seed: int) -> np.ndarray:
        self._state = 0
        self._t = 0
        self._live = True
        return self._obs()

    def step(self, action: np.ndarray) -> StepResult:
        if not self._live:
            raise StepAfterDone("episode is over (or reset() was never called)")
        advance = float(np.asarray(action).reshape(-1)[0]) >= 0.5
        reward = 0.0
        if advance and self._state < self.N_STATES - 1:
            self._state += 1
            reward = self.REWARD_GOAL if self._state == self.N_STATES - 1 else self.REWARD_ADVANCE
        self._t += 1
        done = self._state == self.N_STATES - 1 or self._t >= self.max_steps
        self._live = not done
        return StepResult(self._obs(), reward, done, {"state": float(self._state)})

    def _obs(self) -> np.ndarray:
        obs = np.zeros(self.N_STATES)
        obs[self._state] = 1.0
        return obs

    @classmethod
    def q_star(cls, gamma: float, tol: float = 1e-10) -> np.ndarray:
        """Optimal Q over non-terminal states, rows s0..s2, columns
        [stay, advance], from the value-iteration oracle."""
        n = cls.N_STATES
        rewards = np.zeros((n, 2))
        next_states = np.zeros((n, 2), dtype=int)
        terminal = np.zeros(n, dtype=bool)
        terminal[n - 1] = True
        for s in range(n):
            next_states[s, 0] = s
            ns = min(s + 1, n - 1)
            next_states[s, 1] = ns
            if ns != s:
                rewards[s, 1] = cls.REWARD_GOAL if ns == n - 1 else cls.REWARD_ADVANCE
        return value_iteration(rewards, next_states, terminal, gamma, tol)[: n - 1]


class TwoArmBanditEnv(Environment):
    """One step per episode; action > 0 pays 1.0, otherwise 0.0."""

    def __init__(self) -> None:
        self.action_space = ActionSpace(np.array([-1.0]), np.array([1.0]))
        self.observation_dim = 1
        self._live = False

    def reset(self, seed: int) -> np.ndarray:
        self._live = True
        return np.zeros(1)

    def step(self, action: np.ndarray) -> StepResult:
        if not self._live:
            raise StepAfterDone("episode is over (or reset() was never called)")
        a = float(np.asarray(action).reshape(-1)[0])
        self._live = False
        return StepResult(np.zeros(1), 1.0 if a > 0.0 else 0.0, True, {"arm": float(a > 0.0)})
