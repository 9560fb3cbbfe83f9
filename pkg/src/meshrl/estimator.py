"""Estimator-style wrapper so the generator composes with sklearn pipelines.

``fit`` trains the extraction policy on one training domain; ``predict``
meshes a boundary with the deterministic policy; ``score`` returns the mean
element quality of the predicted mesh.  Hyperparameters are flat constructor
arguments, so ``get_params`` / ``set_params`` and clones work as usual.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .env import EnvConfig, MeshEnv
from .io import check_boundary_array
from .quality import Mesh, element_quality
from .sac import (
    SacAgent,
    SacConfig,
    evaluate,
    load_checkpoint,
    run_episode,
    save_checkpoint,
    train,
)


class QuadMeshGenerator(BaseEstimator):
    """All-quad mesh generator with a learned element-extraction policy."""

    def __init__(self,
                 total_steps: int = 150_000,
                 hidden: Tuple[int, ...] = (128, 128, 128),
                 gamma: float = 0.99,
                 tau: float = 5e-3,
                 learning_rate: float = 3e-4,
                 batch_size: int = 256,
                 buffer_capacity: int = 1_000_000,
                 target_entropy: float = -3.0,
                 eval_every: int = 10_000,
                 eval_episodes: int = 10,
                 ref_window: int = 2,
                 neighbors: int = 2,
                 probes: int = 3,
                 radius_alpha: float = 2.0,
                 fan_beta: float = 6.0,
                 kappa: float = 4.0,
                 upsilon: float = 1.0,
                 min_junction_angle: float = 60.0,
                 max_consecutive_invalid: int = 50,
                 seed: int = 0):
        self.total_steps = total_steps
        self.hidden = hidden
        self.gamma = gamma
        self.tau = tau
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.target_entropy = target_entropy
        self.eval_every = eval_every
        self.eval_episodes = eval_episodes
        self.ref_window = ref_window
        self.neighbors = neighbors
        self.probes = probes
        self.radius_alpha = radius_alpha
        self.fan_beta = fan_beta
        self.kappa = kappa
        self.upsilon = upsilon
        self.min_junction_angle = min_junction_angle
        self.max_consecutive_invalid = max_consecutive_invalid
        self.seed = seed

    # -- config assembly -----------------------------------------------------

    def _env_config(self) -> EnvConfig:
        return EnvConfig(
            n_rv=self.ref_window,
            n=self.neighbors,
            g=self.probes,
            radius_alpha=self.radius_alpha,
            fan_beta=self.fan_beta,
            kappa=self.kappa,
            upsilon=self.upsilon,
            m_angle=self.min_junction_angle,
            max_consecutive_invalid=self.max_consecutive_invalid,
        )

    def _sac_config(self) -> SacConfig:
        return SacConfig(
            buffer_capacity=self.buffer_capacity,
            batch_size=self.batch_size,
            gamma=self.gamma,
            lr_q=self.learning_rate,
            lr_pi=self.learning_rate,
            lr_alpha=self.learning_rate,
            total_steps=self.total_steps,
            tau=self.tau,
            target_entropy=self.target_entropy,
            eval_every=self.eval_every,
            eval_episodes=self.eval_episodes,
            hidden=tuple(self.hidden),
            seed=self.seed,
        )

    # -- estimator API ---------------------------------------------------------

    def fit(self, X, y=None) -> "QuadMeshGenerator":
        """Train the policy on the boundary X, an (n, 2) vertex array."""
        verts = check_boundary_array(X)
        env_cfg = self._env_config()
        sac_cfg = self._sac_config()
        agent = SacAgent(env_cfg.observation_size, 3, sac_cfg)
        self.history_ = train(lambda: MeshEnv(verts, env_cfg), agent, sac_cfg)
        self.agent_ = agent
        self.env_config_ = env_cfg
        return self

    def _require_fitted(self) -> SacAgent:
        agent = getattr(self, "agent_", None)
        if agent is None:
            raise NotFittedError("this QuadMeshGenerator instance is not fitted yet")
        return agent

    def predict(self, X) -> Mesh:
        """Mesh the boundary X with the deterministic policy; returns the
        (possibly partial) mesh."""
        agent = self._require_fitted()
        verts = check_boundary_array(X)
        episode = run_episode(agent, MeshEnv(verts, self.env_config_), deterministic=True)
        return episode.mesh

    def meshes_completely(self, X) -> bool:
        agent = self._require_fitted()
        verts = check_boundary_array(X)
        return evaluate(agent, verts, 1, self.env_config_)[0].completed

    def score(self, X, y=None) -> float:
        """Mean element quality of the predicted mesh (1.0 is all squares)."""
        mesh = self.predict(X)
        if not mesh.quads:
            return 0.0
        return float(np.mean([element_quality(mesh.quad_corners(k))
                              for k in range(len(mesh.quads))]))

    # -- persistence -------------------------------------------------------------

    def save(self, path) -> None:
        agent = self._require_fitted()
        save_checkpoint(path, agent, step=self.total_steps, seed=self.seed,
                        env_cfg=self.env_config_)

    @classmethod
    def from_checkpoint(cls, path) -> "QuadMeshGenerator":
        agent, blob = load_checkpoint(path)
        env_cfg = EnvConfig(**blob["env_config"]) if blob.get("env_config") else EnvConfig()
        est = cls(
            total_steps=blob.get("step", 0),
            hidden=tuple(agent.cfg.hidden),
            gamma=agent.cfg.gamma,
            tau=agent.cfg.tau,
            learning_rate=agent.cfg.lr_pi,
            batch_size=agent.cfg.batch_size,
            buffer_capacity=agent.cfg.buffer_capacity,
            target_entropy=agent.cfg.target_entropy,
            eval_every=agent.cfg.eval_every,
            eval_episodes=agent.cfg.eval_episodes,
            ref_window=env_cfg.n_rv,
            neighbors=env_cfg.n,
            probes=env_cfg.g,
            radius_alpha=env_cfg.radius_alpha,
            fan_beta=env_cfg.fan_beta,
            kappa=env_cfg.kappa,
            upsilon=env_cfg.upsilon,
            min_junction_angle=env_cfg.m_angle,
            max_consecutive_invalid=env_cfg.max_consecutive_invalid,
            seed=blob.get("seed", 0),
        )
        est.agent_ = agent
        est.env_config_ = env_cfg
        est.history_ = []
        return est
