"""Clipped-surrogate policy optimization with a Gaussian continuous policy.

Rollouts of fixed length are collected with the current parameters,
advantages come from generalized advantage estimation, and the clipped
surrogate plus a value error term and an entropy bonus is optimized for K
epochs of shuffled minibatches.  Gradients are computed analytically
through the network substrate in :mod:`croprl.neural`; the test suite
validates them against finite differences.

The action distribution is Normal(mean(obs), sigma) with one state-
independent log standard deviation per action dimension.  Raw samples are
clamped at the environment boundary; log-probabilities are always taken on
the raw, unclamped sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import Environment
from .neural import MlpNetwork, OptimizerState, RunningNorm, optimizer_step
from .seeding import stream_int, stream_rng


class LengthMismatch(ValueError):
    """GAE inputs do not have equal lengths."""


LOG_2PI = math.log(2.0 * math.pi)
# Keeps sigma strictly positive and finite regardless of optimizer excursions.
LOG_STD_MIN, LOG_STD_MAX = -8.0, 5.0


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 1.0
    total_steps: int = 1_000_000
    rollout_steps: int = 2048         # T, per actor and iteration
    n_actors: int = 1
    epochs: int = 10                  # K
    minibatch_size: int = 64
    clip_eps: float = 0.2
    value_coef: float = 0.5           # c1
    entropy_coef: float = 0.0         # c2
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    eval_every: int = 1000            # env steps between validation checks
    eval_episodes: int = 5
    hidden_sizes: tuple[int, ...] = (64, 64)
    shared_trunk: bool = False
    log_std_init: float = 0.0
    grad_clip_norm: float | None = 0.5
    normalize_obs: bool = True
    deterministic_eval: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not self.clip_eps > 0.0:
            raise ValueError("clip_eps must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.minibatch_size > self.n_actors * self.rollout_steps:
            raise ValueError("minibatch_size must be <= n_actors * rollout_steps")


class GaussianPolicy:
    """Mean/value networks (separate trunks by default) plus per-dim log-std.

    With ``shared_trunk=True`` a single network emits the action means and
    the value estimate as its last output column.
    """

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        hidden_sizes: tuple[int, ...],
        rng: np.random.Generator,
        shared_trunk: bool = False,
        log_std_init: float = 0.0,
    ):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.shared_trunk = shared_trunk
        if shared_trunk:
            self.net = MlpNetwork.init((obs_dim, *hidden_sizes, action_dim + 1), "tanh", rng)
            self.policy_net = self.value_net = self.net
        else:
            self.policy_net = MlpNetwork.init((obs_dim, *hidden_sizes, action_dim), "tanh", rng)
            self.value_net = MlpNetwork.init((obs_dim, *hidden_sizes, 1), "tanh", rng)
        self.log_std = np.full(action_dim, float(log_std_init))

    @classmethod
    def from_parts(
        cls,
        nets: dict[str, MlpNetwork],
        log_std: np.ndarray,
        shared_trunk: bool,
    ) -> "GaussianPolicy":
        """Rebuild a policy from checkpointed networks and log-std."""
        policy = cls.__new__(cls)
        policy.shared_trunk = shared_trunk
        policy.log_std = np.asarray(log_std, dtype=np.float64)
        if shared_trunk:
            policy.net = nets["shared"]
            policy.policy_net = policy.value_net = policy.net
            policy.action_dim = policy.net.output_dim - 1
        else:
            policy.policy_net = nets["policy"]
            policy.value_net = nets["value"]
            policy.action_dim = policy.policy_net.output_dim
        policy.obs_dim = policy.policy_net.input_dim
        return policy

    def params(self) -> list[np.ndarray]:
        if self.shared_trunk:
            return [*self.net.params(), self.log_std]
        return [*self.policy_net.params(), *self.value_net.params(), self.log_std]

    def sigma(self) -> np.ndarray:
        return np.exp(self.log_std)

    # -- forward -------------------------------------------------------------

    def mean_value(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
        """Batched means (B, D), values (B,), and the backward cache."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        if self.shared_trunk:
            out, cache = self.net.forward_cache(obs)
            return out[:, : self.action_dim], out[:, self.action_dim], {"shared": cache}
        mu, cache_p = self.policy_net.forward_cache(obs)
        v, cache_v = self.value_net.forward_cache(obs)
        return mu, v[:, 0], {"policy": cache_p, "value": cache_v}

    def backward(self, cache: dict, d_mu: np.ndarray, d_v: np.ndarray, d_log_std: np.ndarray) -> list[np.ndarray]:
        """Gradients aligned with :meth:`params` from per-head output grads."""
        if self.shared_trunk:
            out_grad = np.concatenate([d_mu, d_v[:, None]], axis=1)
            return [*self.net.backward(cache["shared"], out_grad), d_log_std]
        g_policy = self.policy_net.backward(cache["policy"], d_mu)
        g_value = self.value_net.backward(cache["value"], d_v[:, None])
        return [*g_policy, *g_value, d_log_std]

    def log_prob(self, mu: np.ndarray, raw_actions: np.ndarray) -> np.ndarray:
        """Diagonal-Gaussian log density of raw (unclamped) actions."""
        sigma = self.sigma()
        z = (raw_actions - mu) / sigma
        return -0.5 * np.sum(z * z, axis=1) - np.sum(self.log_std) - 0.5 * self.action_dim * LOG_2PI

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * self.action_dim * (1.0 + LOG_2PI))

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)


def sample_action(
    policy: GaussianPolicy,
    obs_norm: np.ndarray,
    rng: np.random.Generator,
    deterministic: bool = False,
    action_low: np.ndarray | None = None,
    action_high: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """(env action, raw action, log-prob).  The env action is the raw sample
    clamped to the task bounds; the log-prob is taken on the raw sample."""
    mu, _, _ = policy.mean_value(obs_norm)
    mu = mu[0]
    raw = mu if deterministic else mu + policy.sigma() * rng.standard_normal(policy.action_dim)
    logp = float(policy.log_prob(mu[None, :], raw[None, :])[0])
    env_action = raw
    if action_low is not None:
        env_action = np.clip(raw, action_low, action_high)
    return env_action, raw, logp


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    bootstrap_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage recursion and value targets.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    V_targ  = A_t + V_t

    ``bootstrap_value`` is V(s_T) when the final step truncates an episode.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones)
    if not (len(rewards) == len(values) == len(dones)):
        raise LengthMismatch(
            f"lengths differ: rewards {len(rewards)}, values {len(values)}, dones {len(dones)}"
        )
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        v_next = bootstrap_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * v_next * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values


@dataclass
class RolloutBatch:
    """Collected experience; advantages are normalized before the loss."""

    obs: np.ndarray            # normalized observations (N, obs_dim)
    raw_actions: np.ndarray    # (N, action_dim)
    logp_old: np.ndarray       # (N,)
    advantages: np.ndarray     # normalized (N,)
    value_targets: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.logp_old)

    def select(self, idx: np.ndarray) -> "RolloutBatch":
        return RolloutBatch(
            self.obs[idx],
            self.raw_actions[idx],
            self.logp_old[idx],
            self.advantages[idx],
            self.value_targets[idx],
        )


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_loss(
    policy: GaussianPolicy,
    batch: RolloutBatch,
    cfg: PpoConfig,
    with_grads: bool = False,
):
    """Clipped-surrogate loss with value and entropy terms.

    loss = -mean(min(rho*A, clip(rho, 1-eps, 1+eps)*A))
           + c1 * mean((V - V_targ)^2) - c2 * mean(entropy)

    Returns (loss, diagnostics) or (loss, diagnostics, grads).  Diagnostics:
    mean ratio, clip fraction, and approximate KL(old || new).
    """
    mu, v, cache = policy.mean_value(batch.obs)
    sigma = policy.sigma()
    z = (batch.raw_actions - mu) / sigma
    logp = -0.5 * np.sum(z * z, axis=1) - np.sum(policy.log_std) - 0.5 * policy.action_dim * LOG_2PI
    ratio = np.exp(logp - batch.logp_old)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv
    surrogate = np.minimum(unclipped, clipped)
    value_err = v - batch.value_targets
    entropy = policy.entropy()

    n = len(batch)
    loss_surr = -float(np.mean(surrogate))
    loss_value = cfg.value_coef * float(np.mean(value_err**2))
    loss_entropy = -cfg.entropy_coef * entropy
    loss = loss_surr + loss_value + loss_entropy
    diag = {
        "mean_ratio": float(np.mean(ratio)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        "approx_kl": float(np.mean(batch.logp_old - logp)),
        "loss_surrogate": loss_surr,
        "loss_value": loss_value,
        "entropy": entropy,
    }
    if not with_grads:
        return loss, diag

    # The min() passes gradient only through the unclipped branch (when the
    # clipped branch is strictly smaller the ratio sits outside the box and
    # the clip saturates, so its derivative is zero).
    use_unclipped = unclipped <= clipped
    g_logp = -(adv * ratio * use_unclipped) / n
    d_mu = (g_logp[:, None] * z) / sigma
    d_log_std_surr = np.sum(g_logp[:, None] * (z * z - 1.0), axis=0)
    d_v = cfg.value_coef * 2.0 * value_err / n
    d_log_std = d_log_std_surr - cfg.entropy_coef * np.ones(policy.action_dim)
    grads = policy.backward(cache, d_mu, d_v, d_log_std)
    return loss, diag, grads


@dataclass
class EvalRow:
    timestep: int
    eval_mean_reward: float
    clip_fraction: float
    approx_kl: float


@dataclass
class PpoResult:
    policy: GaussianPolicy
    normalizer: RunningNorm
    curve: list[EvalRow] = field(default_factory=list)


def _run_eval(
    policy: GaussianPolicy,
    normalizer: RunningNorm,
    env: Environment,
    episodes: int,
    seed: int,
    eval_index: int,
    deterministic: bool,
    max_steps: int = 400,
) -> float:
    low, high = env.action_space.low, env.action_space.high
    total = 0.0
    for ep in range(episodes):
        obs = env.reset(stream_int("ppo-eval-env", seed, eval_index, ep))
        rng = stream_rng("ppo-eval-act", seed, eval_index, ep)
        for _ in range(max_steps):
            action, _, _ = sample_action(
                policy, normalizer.normalize(obs), rng, deterministic, low, high
            )
            res = env.step(action)
            total += res.reward
            obs = res.observation
            if res.done:
                break
    return total / episodes


def train_ppo(env_factory, cfg: PpoConfig, seed: int) -> PpoResult:
    """Alternate rollout collection with K optimization epochs until the
    total timestep budget is exhausted; validation episodes run on the
    configured cadence and make up the returned curve."""
    envs: list[Environment] = [env_factory() for _ in range(cfg.n_actors)]
    eval_env: Environment = env_factory()
    action_dim = envs[0].action_space.dim
    obs_dim = envs[0].observation_dim
    low, high = envs[0].action_space.low, envs[0].action_space.high

    policy = GaussianPolicy(
        obs_dim,
        action_dim,
        cfg.hidden_sizes,
        stream_rng("ppo-init", seed),
        shared_trunk=cfg.shared_trunk,
        log_std_init=cfg.log_std_init,
    )
    normalizer = RunningNorm(obs_dim, enabled=cfg.normalize_obs)
    opt = OptimizerState(kind="adam", learning_rate=cfg.learning_rate, clip_norm=cfg.grad_clip_norm)
    act_rng = stream_rng("ppo-act", seed)
    shuffle_rng = stream_rng("ppo-shuffle", seed)

    result = PpoResult(policy=policy, normalizer=normalizer)
    reset_counters = [0] * cfg.n_actors

    def fresh_obs(actor: int) -> np.ndarray:
        obs = envs[actor].reset(stream_int("ppo-env", seed, actor, reset_counters[actor]))
        reset_counters[actor] += 1
        return obs

    current_obs = [fresh_obs(a) for a in range(cfg.n_actors)]
    steps_total = 0
    next_eval_at = cfg.eval_every
    last_diag = {"clip_fraction": 0.0, "approx_kl": 0.0}

    while steps_total < cfg.total_steps:
        seg_obs, seg_actions, seg_logp = [], [], []
        seg_rewards, seg_values, seg_dones = [], [], []
        seg_slices = []
        for actor in range(cfg.n_actors):
            start = len(seg_obs)
            obs = current_obs[actor]
            for _ in range(cfg.rollout_steps):
                normalizer.update(obs)
                obs_n = normalizer.normalize(obs)
                mu, value, _ = policy.mean_value(obs_n)
                raw = mu[0] + policy.sigma() * act_rng.standard_normal(action_dim)
                logp = float(policy.log_prob(mu, raw[None, :])[0])
                res = envs[actor].step(np.clip(raw, low, high))
                seg_obs.append(obs_n)
                seg_actions.append(raw)
                seg_logp.append(logp)
                seg_rewards.append(res.reward)
                seg_values.append(float(value[0]))
                seg_dones.append(res.done)
                obs = fresh_obs(actor) if res.done else res.observation
            current_obs[actor] = obs
            bootstrap = 0.0
            if not seg_dones[-1]:
                _, v_boot, _ = policy.mean_value(normalizer.normalize(obs))
                bootstrap = float(v_boot[0])
            seg_slices.append((start, len(seg_obs), bootstrap))
        steps_total += cfg.n_actors * cfg.rollout_steps

        values_arr = np.array(seg_values)
        advantages = np.zeros(len(seg_obs))
        value_targets = np.zeros(len(seg_obs))
        for start, end, bootstrap in seg_slices:
            adv, vt = compute_gae(
                np.array(seg_rewards[start:end]),
                values_arr[start:end],
                np.array(seg_dones[start:end]),
                cfg.gamma,
                cfg.gae_lambda,
                bootstrap,
            )
            advantages[start:end] = adv
            value_targets[start:end] = vt

        batch = RolloutBatch(
            obs=np.stack(seg_obs),
            raw_actions=np.stack(seg_actions),
            logp_old=np.array(seg_logp),
            advantages=normalize_advantages(advantages),
            value_targets=value_targets,
        )

        clip_fracs, kls = [], []
        for _ in range(cfg.epochs):
            order = shuffle_rng.permutation(len(batch))
            for lo in range(0, len(batch), cfg.minibatch_size):
                idx = order[lo : lo + cfg.minibatch_size]
                _, diag, grads = ppo_loss(policy, batch.select(idx), cfg, with_grads=True)
                optimizer_step(policy.params(), grads, opt)
                policy.clamp_log_std()
                clip_fracs.append(diag["clip_fraction"])
                kls.append(diag["approx_kl"])
        last_diag = {
            "clip_fraction": float(np.mean(clip_fracs)),
            "approx_kl": float(np.mean(kls)),
        }

        if steps_total >= next_eval_at:
            mean_reward = _run_eval(
                policy,
                normalizer,
                eval_env,
                cfg.eval_episodes,
                seed,
                len(result.curve),
                cfg.deterministic_eval,
            )
            result.curve.append(
                EvalRow(steps_total, mean_reward, last_diag["clip_fraction"], last_diag["approx_kl"])
            )
            next_eval_at = (steps_total // cfg.eval_every + 1) * cfg.eval_every
    return result


@dataclass(frozen=True)
class PpoPolicy:
    """Evaluation policy over a trained Gaussian head.

    Emits the raw (possibly out-of-range) action; the environment clamps.
    """

    policy: GaussianPolicy
    normalizer: RunningNorm
    deterministic: bool = False

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        _, raw, _ = sample_action(
            self.policy, self.normalizer.normalize(obs), rng, self.deterministic
        )
        return raw
