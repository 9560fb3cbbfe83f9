"""Soft actor-critic: squashed Gaussian policy, twin critics with Polyak
targets, auto-tuned entropy temperature, replay buffer, training loop.

The update order per environment step is critics, policy, target smoothing,
temperature.  Critic targets use the twin minimum of the target networks minus
the temperature-weighted log-probability of a fresh next-state sample;
time-limit truncations bootstrap (stored done = 0) while completions and real
failures do not.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .env import EnvConfig, MeshEnv
from .geometry import Boundary
from .nets import Adam, Mlp, soft_update
from .quality import Mesh

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SacConfig:
    buffer_capacity: int = 1_000_000
    batch_size: int = 256
    gamma: float = 0.99
    lr_q: float = 3e-4
    lr_pi: float = 3e-4
    lr_alpha: float = 3e-4
    total_steps: int = 1_200_000
    gradient_steps: int = 1
    tau: float = 5e-3
    target_entropy: float = -3.0
    warmup_steps: Optional[int] = None  # defaults to batch_size
    eval_every: int = 10_000
    eval_episodes: int = 10
    hidden: Tuple[int, ...] = (128, 128, 128)
    seed: int = 0

    def __post_init__(self):
        if self.buffer_capacity < 1 or self.batch_size < 1 or self.total_steps < 0:
            raise ValueError("buffer_capacity, batch_size, total_steps must be positive")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must lie in (0, 1]")
        if min(self.lr_q, self.lr_pi, self.lr_alpha) <= 0.0:
            raise ValueError("learning rates must be positive")
        if self.gradient_steps < 1 or self.eval_every < 1 or self.eval_episodes < 0:
            raise ValueError("gradient_steps/eval_every/eval_episodes out of range")

    @property
    def warmup(self) -> int:
        return self.batch_size if self.warmup_steps is None else self.warmup_steps


class ReplayBuffer:
    """Fixed-capacity ring of transitions; batches sample uniformly without
    replacement.  Stored values come back bit-identical."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.act = np.zeros((self.capacity, act_dim))
        self.rew = np.zeros(self.capacity)
        self.nxt = np.zeros((self.capacity, obs_dim))
        self.done = np.zeros(self.capacity)
        self.size = 0
        self.cursor = 0

    def add(self, obs, act, rew: float, nxt, done: float) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.nxt[i] = nxt
        self.done[i] = done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch: int) -> Dict[str, np.ndarray]:
        if batch > self.size:
            raise ValueError(f"batch {batch} exceeds buffer size {self.size}")
        idx = rng.choice(self.size, size=batch, replace=False)
        return {
            "obs": self.obs[idx],
            "act": self.act[idx],
            "rew": self.rew[idx],
            "nxt": self.nxt[idx],
            "done": self.done[idx],
        }


def _log1m_tanh2(z: np.ndarray) -> np.ndarray:
    # log(1 - tanh(z)^2) without catastrophic cancellation
    return 2.0 * (math.log(2.0) - z - np.logaddexp(0.0, -2.0 * z))


def q_target(rew, done, soft_value_next, gamma: float):
    """Bootstrapped target: r + gamma * (1 - done) * V(s')."""
    return rew + gamma * (1.0 - done) * soft_value_next


class SacAgent:
    """Policy and twin critics over flat observations, actions in [-1, 1]^d."""

    def __init__(self, obs_dim: int, act_dim: int = 3, cfg: Optional[SacConfig] = None,
                 rng: Optional[np.random.Generator] = None):
        self.cfg = cfg if cfg is not None else SacConfig()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        init_rng = rng if rng is not None else np.random.default_rng(self.cfg.seed)
        hidden = list(self.cfg.hidden)
        self.policy = Mlp([obs_dim, *hidden, 2 * act_dim], init_rng)
        self.q1 = Mlp([obs_dim + act_dim, *hidden, 1], init_rng)
        self.q2 = Mlp([obs_dim + act_dim, *hidden, 1], init_rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.policy_opt = Adam(self.policy.params(), lr=self.cfg.lr_pi)
        self.q1_opt = Adam(self.q1.params(), lr=self.cfg.lr_q)
        self.q2_opt = Adam(self.q2.params(), lr=self.cfg.lr_q)
        self.log_alpha = np.zeros(1)
        self.alpha_opt = Adam([self.log_alpha], lr=self.cfg.lr_alpha)
        self._rng = init_rng

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    # -- policy head -----------------------------------------------------------

    def _policy_head(self, obs: np.ndarray, record: bool = False):
        out = self.policy.forward(obs, record=record)
        mu = out[:, : self.act_dim]
        log_std_raw = out[:, self.act_dim:]
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std, log_std_raw

    def sample_action(self, obs, deterministic: bool = False,
                      rng: Optional[np.random.Generator] = None):
        """Draw an action in (-1, 1)^d; stochastic draws also return the
        tanh-corrected log-probability summed over dimensions."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        mu, log_std, _ = self._policy_head(obs)
        if deterministic:
            a = np.tanh(mu)
            return (a[0] if a.shape[0] == 1 else a), None
        rng = rng if rng is not None else self._rng
        eps = rng.standard_normal(mu.shape)
        sigma = np.exp(log_std)
        z = mu + sigma * eps
        a = np.tanh(z)
        logp = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI - _log1m_tanh2(z),
                      axis=1)
        if a.shape[0] == 1:
            return a[0], float(logp[0])
        return a, logp

    def soft_value(self, nxt_obs: np.ndarray, nxt_act: np.ndarray,
                   logp: np.ndarray) -> np.ndarray:
        """Twin-minimum target value minus the entropy term."""
        qin = np.hstack([nxt_obs, nxt_act])
        q1 = self.q1_target.forward(qin)[:, 0]
        q2 = self.q2_target.forward(qin)[:, 0]
        return np.minimum(q1, q2) - self.alpha * logp

    # -- updates ---------------------------------------------------------------

    def update_critics(self, batch: Dict[str, np.ndarray]) -> float:
        m = len(batch["obs"])
        if m == 0:
            raise ValueError("empty batch")
        nxt = batch["nxt"]
        mu, log_std, _ = self._policy_head(nxt)
        eps = self._rng.standard_normal(mu.shape)
        sigma = np.exp(log_std)
        z = mu + sigma * eps
        a_next = np.tanh(z)
        logp_next = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI - _log1m_tanh2(z),
                           axis=1)
        target = q_target(batch["rew"], batch["done"],
                          self.soft_value(nxt, a_next, logp_next), self.cfg.gamma)

        qin = np.hstack([batch["obs"], batch["act"]])
        losses = []
        for net, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            pred = net.forward(qin, record=True)[:, 0]
            err = pred - target
            losses.append(0.5 * float(np.mean(err * err)))
            grads, _ = net.backward((err / m)[:, None])
            opt.step(net.params(), grads)
        return 0.5 * (losses[0] + losses[1])

    def update_policy(self, batch: Dict[str, np.ndarray]) -> Tuple[float, np.ndarray]:
        """One reparameterized policy step; critics supply gradients but are
        not updated.  Returns (loss, per-sample log-probabilities)."""
        obs = batch["obs"]
        m = len(obs)
        if m == 0:
            raise ValueError("empty batch")
        eps = self._rng.standard_normal((m, self.act_dim))
        loss, logp, grads = self._policy_loss_and_grads(obs, eps)
        self.policy_opt.step(self.policy.params(), grads)
        return loss, logp

    def _policy_loss_and_grads(self, obs: np.ndarray, eps: np.ndarray):
        """Loss mean(alpha*logpi - min_i Q_i) for the fixed noise ``eps`` plus
        its gradient w.r.t. the policy parameters."""
        m = len(obs)
        mu, log_std, log_std_raw = self._policy_head(obs, record=True)
        sigma = np.exp(log_std)
        z = mu + sigma * eps
        a = np.tanh(z)
        tanh_z = a
        logp_vec = -0.5 * eps * eps - log_std - 0.5 * LOG_2PI - _log1m_tanh2(z)
        logp = np.sum(logp_vec, axis=1)

        q_val, dq_da = self._q_min_with_grad(obs, a, scale=-1.0 / m)
        alpha = self.alpha
        loss = float(np.mean(alpha * logp - q_val))

        # d(loss)/dz arriving from the two routes: the entropy term through the
        # tanh correction, and the critics through the squashed action.
        dz_q = dq_da * (1.0 - a * a)
        dmu = (alpha / m) * (2.0 * tanh_z) + dz_q
        dls = (alpha / m) * (-1.0 + 2.0 * tanh_z * sigma * eps) + dz_q * sigma * eps
        pass_mask = (log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)
        head_grad = np.hstack([dmu, dls * pass_mask])
        grads, _ = self.policy.backward(head_grad)
        return loss, logp, grads

    def _q_min_with_grad(self, obs: np.ndarray, act: np.ndarray,
                         scale: float) -> Tuple[np.ndarray, np.ndarray]:
        """Twin-minimum Q and d(scale * sum(min))/d(action); overridable so
        analytic critics can drive the policy in tests."""
        qin = np.hstack([obs, act])
        p1 = self.q1.forward(qin, record=True)[:, 0]
        p2 = self.q2.forward(qin, record=True)[:, 0]
        pick1 = (p1 <= p2)[:, None].astype(np.float64)
        _, dx1 = self.q1.backward(pick1 * scale)
        _, dx2 = self.q2.backward((1.0 - pick1) * scale)
        dq_da = (dx1 + dx2)[:, self.obs_dim:]
        return np.minimum(p1, p2), dq_da

    def update_temperature(self, batch_log_probs: np.ndarray) -> float:
        """Step log(alpha) toward the target entropy; alpha stays positive."""
        grad = -self.alpha * float(np.mean(batch_log_probs) + self.cfg.target_entropy)
        self.alpha_opt.step([self.log_alpha], [np.array([grad])])
        return self.alpha

    def soft_update_targets(self) -> None:
        soft_update(self.q1_target.params(), self.q1.params(), self.cfg.tau)
        soft_update(self.q2_target.params(), self.q2.params(), self.cfg.tau)


# -- training loop ---------------------------------------------------------


@dataclass
class EvalRecord:
    step: int
    mean_return: float
    std_return: float
    completion_rate: float

    def as_json(self) -> str:
        return json.dumps({"step": self.step, "mean_return": self.mean_return,
                           "std_return": self.std_return,
                           "completion_rate": self.completion_rate})


@dataclass
class EpisodeResult:
    episode_return: float
    completed: bool
    mesh: Mesh
    steps: int


def run_episode(agent: SacAgent, env: MeshEnv, deterministic: bool = True) -> EpisodeResult:
    obs = env.reset()
    total = 0.0
    outcome = None
    while not env.done:
        action, _ = agent.sample_action(obs, deterministic=deterministic)
        res = env.step(action)
        total += res.reward
        obs = res.observation
        outcome = res.outcome
    return EpisodeResult(total, outcome == "completed", env.mesh(), env.steps_taken)


def evaluate(agent: SacAgent, boundary, episodes: int,
             env_cfg: Optional[EnvConfig] = None) -> List[EpisodeResult]:
    """Deterministic-policy episodes on one boundary."""
    results: List[EpisodeResult] = []
    if episodes <= 0:
        return results
    env = MeshEnv(boundary, env_cfg)
    for _ in range(episodes):
        results.append(run_episode(agent, env, deterministic=True))
    return results


def train(make_env: Callable[[], MeshEnv], agent: SacAgent, cfg: SacConfig,
          checkpoint_sink: Optional[Callable[[int, SacAgent], None]] = None,
          on_eval: Optional[Callable[[EvalRecord], None]] = None) -> List[EvalRecord]:
    """Act, store, learn, evaluate: the full off-policy loop.

    Uniform random actions fill the buffer to the warmup size; learning starts
    once the buffer holds more than one batch.  Every ``eval_every`` steps the
    deterministic policy runs ``eval_episodes`` episodes on a fresh
    environment and a record is emitted (plus a checkpoint when a sink is
    given).
    """
    seq = np.random.SeedSequence(cfg.seed)
    agent_seed, loop_seed = seq.spawn(2)
    agent._rng = np.random.default_rng(agent_seed)
    loop_rng = np.random.default_rng(loop_seed)

    env = make_env()
    obs = env.reset()
    buffer = ReplayBuffer(cfg.buffer_capacity, agent.obs_dim, agent.act_dim)
    records: List[EvalRecord] = []

    for t in range(1, cfg.total_steps + 1):
        if buffer.size < cfg.warmup:
            action = loop_rng.uniform(-1.0, 1.0, agent.act_dim)
        else:
            action, _ = agent.sample_action(obs)
        res = env.step(action)
        stored_done = 1.0 if (res.done and not res.truncated) else 0.0
        buffer.add(obs, action, res.reward, res.observation, stored_done)
        obs = res.observation
        if res.done:
            obs = env.reset()

        if buffer.size > cfg.batch_size:
            for _ in range(cfg.gradient_steps):
                batch = buffer.sample(loop_rng, cfg.batch_size)
                agent.update_critics(batch)
                _, logp = agent.update_policy(batch)
                agent.soft_update_targets()
                agent.update_temperature(logp)

        if t % cfg.eval_every == 0:
            eval_env = make_env()
            outs = [run_episode(agent, eval_env) for _ in range(cfg.eval_episodes)]
            rets = np.array([o.episode_return for o in outs]) if outs else np.zeros(1)
            rec = EvalRecord(step=t, mean_return=float(rets.mean()),
                             std_return=float(rets.std()),
                             completion_rate=(float(np.mean([o.completed for o in outs]))
                                              if outs else 0.0))
            records.append(rec)
            if on_eval is not None:
                on_eval(rec)
            if checkpoint_sink is not None:
                checkpoint_sink(t, agent)
    return records


# -- checkpoints -------------------------------------------------------------


def checkpoint_blob(agent: SacAgent, step: int, seed: int,
                    env_cfg: Optional[EnvConfig] = None) -> Dict:
    def b64(net: Mlp) -> str:
        return base64.b64encode(net.save_bytes()).decode("ascii")

    return {
        "format": "meshrl-checkpoint-v1",
        "step": step,
        "seed": seed,
        "obs_dim": agent.obs_dim,
        "act_dim": agent.act_dim,
        "log_alpha": float(agent.log_alpha[0]),
        "sac_config": asdict(agent.cfg),
        "env_config": asdict(env_cfg) if env_cfg is not None else None,
        "networks": {
            "policy": b64(agent.policy),
            "q1": b64(agent.q1),
            "q2": b64(agent.q2),
            "q1_target": b64(agent.q1_target),
            "q2_target": b64(agent.q2_target),
        },
    }


def save_checkpoint(path, agent: SacAgent, step: int, seed: int,
                    env_cfg: Optional[EnvConfig] = None) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(checkpoint_blob(agent, step, seed, env_cfg),
                                       indent=1, sort_keys=True) + "\n")


def load_checkpoint(path) -> Tuple[SacAgent, Dict]:
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    if blob.get("format") != "meshrl-checkpoint-v1":
        raise ValueError(f"{path}: not a meshrl checkpoint")
    sac_cfg = blob.get("sac_config", {})
    sac_cfg["hidden"] = tuple(sac_cfg.get("hidden", (128, 128, 128)))
    cfg = SacConfig(**sac_cfg)
    agent = SacAgent(int(blob["obs_dim"]), int(blob["act_dim"]), cfg)
    nets = blob["networks"]

    def unb64(key: str) -> Mlp:
        return Mlp.load_bytes(base64.b64decode(nets[key]))

    agent.policy = unb64("policy")
    agent.q1 = unb64("q1")
    agent.q2 = unb64("q2")
    agent.q1_target = unb64("q1_target")
    agent.q2_target = unb64("q2_target")
    agent.policy_opt = Adam(agent.policy.params(), lr=cfg.lr_pi)
    agent.q1_opt = Adam(agent.q1.params(), lr=cfg.lr_q)
    agent.q2_opt = Adam(agent.q2.params(), lr=cfg.lr_q)
    agent.log_alpha = np.array([float(blob["log_alpha"])])
    agent.alpha_opt = Adam([agent.log_alpha], lr=cfg.lr_alpha)
    return agent, blob
