import json
import math

import numpy as np
import pytest

from meshrl.domains import regular_polygon
from meshrl.env import EnvConfig, MeshEnv
from meshrl.nets import Mlp
from meshrl.sac import (
    LOG_2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    _log1m_tanh2,
    evaluate,
    load_checkpoint,
    q_target,
    run_episode,
    save_checkpoint,
    train,
)


def small_cfg(**over):
    base = dict(buffer_capacity=5000, batch_size=32, hidden=(32, 32),
                total_steps=0, eval_every=100, eval_episodes=2, seed=3)
    base.update(over)
    return SacConfig(**base)


def constant_net(in_dim, value):
    net = Mlp([in_dim, 1], np.random.default_rng(0))
    net.weights[0][:] = 0.0
    net.biases[0][:] = value
    return net


class ZeroNoise(np.random.Generator):
    def __init__(self):
        super().__init__(np.random.PCG64(0))

    def standard_normal(self, *args, **kwargs):
        out = super().standard_normal(*args, **kwargs)
        return np.zeros_like(out)


class TestSampleAction:
    def test_log_std_floor_means_no_noise(self):
        agent = SacAgent(4, 3, small_cfg())
        # force the log-std half of the head far below the clamp floor
        last_w = agent.policy.weights[-1]
        last_b = agent.policy.biases[-1]
        last_w[:, 3:] = 0.0
        last_b[3:] = LOG_STD_MIN - 5.0
        obs = np.random.default_rng(0).standard_normal(4)
        mu, _, _ = agent._policy_head(np.atleast_2d(obs))
        a, logp = agent.sample_action(obs)
        assert np.max(np.abs(a - np.tanh(mu[0]))) < 1e-6

    def test_zero_noise_closed_form(self):
        agent = SacAgent(4, 3, small_cfg())
        last_w = agent.policy.weights[-1]
        last_b = agent.policy.biases[-1]
        last_w[:, :] = 0.0
        last_b[:3] = 0.0     # mu = 0
        last_b[3:] = -0.7    # fixed log-std
        a, logp = agent.sample_action(np.zeros(4), rng=ZeroNoise())
        assert np.array_equal(a, np.zeros(3))
        sigma = math.exp(-0.7)
        expected = 3 * math.log(1.0 / (sigma * math.sqrt(2 * math.pi)))
        assert logp == pytest.approx(expected, abs=1e-12)

    def test_actions_strictly_inside_unit_cube(self):
        agent = SacAgent(4, 3, small_cfg())
        rng = np.random.default_rng(8)
        for _ in range(200):
            a, _ = agent.sample_action(rng.standard_normal(4))
            assert np.all(np.abs(a) < 1.0)

    def test_deterministic_mode_returns_tanh_mean(self):
        agent = SacAgent(4, 3, small_cfg())
        obs = np.ones(4)
        a1, logp = agent.sample_action(obs, deterministic=True)
        a2, _ = agent.sample_action(obs, deterministic=True)
        assert logp is None
        assert np.array_equal(a1, a2)

    def test_monte_carlo_entropy_consistency(self):
        # fixed squashed gaussian head: -E[logp] must match the entropy
        # H(tanh(Z)) = H(Z) + E[log(1 - tanh(Z)^2)] computed by quadrature
        agent = SacAgent(2, 1, small_cfg())
        mu_val, ls_val = 0.3, -0.4
        last_w = agent.policy.weights[-1]
        last_b = agent.policy.biases[-1]
        last_w[:, :] = 0.0
        last_b[0] = mu_val
        last_b[1] = ls_val
        sigma = math.exp(ls_val)

        rng = np.random.default_rng(123)
        obs = np.zeros((1_000_000, 2))
        _, logp = agent.sample_action(obs, rng=rng)
        mc_entropy = -float(np.mean(logp))

        nodes, weights = np.polynomial.hermite.hermgauss(200)
        z = mu_val + math.sqrt(2.0) * sigma * nodes
        correction = float(np.sum(weights * _log1m_tanh2(z)) / math.sqrt(math.pi))
        exact = 0.5 * math.log(2 * math.pi * math.e * sigma * sigma) + correction
        assert mc_entropy == pytest.approx(exact, rel=0.02)


class TestSoftValue:
    def _rigged_agent(self, q1val, q2val, alpha):
        agent = SacAgent(2, 1, small_cfg())
        agent.q1_target = constant_net(3, q1val)
        agent.q2_target = constant_net(3, q2val)
        agent.log_alpha = np.array([math.log(alpha) if alpha > 0 else -800.0])
        return agent

    def test_twin_min_plus_entropy(self):
        agent = self._rigged_agent(3.0, 5.0, 0.5)
        v = agent.soft_value(np.zeros((1, 2)), np.zeros((1, 1)), np.array([-1.0]))
        assert v[0] == pytest.approx(3.5)

    def test_alpha_zero_limit(self):
        agent = self._rigged_agent(3.0, 5.0, 0.0)
        v = agent.soft_value(np.zeros((1, 2)), np.zeros((1, 1)), np.array([-1.0]))
        assert v[0] == pytest.approx(3.0)

    def test_twin_swap_symmetry(self):
        a = self._rigged_agent(3.0, 5.0, 0.5)
        b = self._rigged_agent(5.0, 3.0, 0.5)
        s = np.zeros((4, 2))
        act = np.zeros((4, 1))
        lp = np.full(4, -0.3)
        assert np.array_equal(a.soft_value(s, act, lp), b.soft_value(s, act, lp))


class TestQTarget:
    def test_direct_arithmetic(self):
        assert q_target(1.0, 0.0, 2.0, 0.99) == pytest.approx(2.98)

    def test_terminal_cuts_bootstrap(self):
        assert q_target(1.5, 1.0, 99.0, 0.99) == 1.5

    def test_myopic_gamma(self):
        assert q_target(1.5, 0.0, 99.0, 0.0) == 1.5


class TestUpdateCritics:
    def test_single_transition_fixed_point(self):
        cfg = small_cfg(batch_size=4, gamma=0.99)
        agent = SacAgent(3, 2, cfg)
        agent.cfg = SacConfig(**{**cfg.__dict__, "gamma": 1e-12})  # effectively 0
        buf = ReplayBuffer(16, 3, 2)
        obs = np.array([0.3, -0.7, 1.1])
        act = np.array([0.2, -0.4])
        for _ in range(8):
            buf.add(obs, act, 1.0, obs, 0.0)
        rng = np.random.default_rng(0)
        for _ in range(5000):
            agent.update_critics(buf.sample(rng, 4))
        qin = np.hstack([obs, act])[None, :]
        assert abs(agent.q1.forward(qin)[0, 0] - 1.0) <= 1e-3
        assert abs(agent.q2.forward(qin)[0, 0] - 1.0) <= 1e-3

    def test_targets_frozen_during_update(self):
        agent = SacAgent(3, 2, small_cfg())
        batch = {
            "obs": np.random.default_rng(0).standard_normal((8, 3)),
            "act": np.random.default_rng(1).uniform(-1, 1, (8, 2)),
            "rew": np.zeros(8),
            "nxt": np.random.default_rng(2).standard_normal((8, 3)),
            "done": np.zeros(8),
        }
        tgt_before = [p.copy() for p in agent.q1_target.params() + agent.q2_target.params()]
        q_before = [p.copy() for p in agent.q1.params()]
        pol_before = [p.copy() for p in agent.policy.params()]
        loss = agent.update_critics(batch)
        assert loss >= 0.0
        for p, b in zip(agent.q1_target.params() + agent.q2_target.params(), tgt_before):
            assert np.array_equal(p, b)  # update touches only the online nets
        assert any(not np.array_equal(p, b) for p, b in zip(agent.q1.params(), q_before))
        for p, b in zip(agent.policy.params(), pol_before):
            assert np.array_equal(p, b)

    def test_target_value_depends_on_target_parameters(self):
        # finite-difference probe: perturbing a frozen-net parameter moves the
        # critic loss, so freezing is a choice rather than a no-op
        agent = SacAgent(3, 2, small_cfg(seed=9))
        batch = {
            "obs": np.random.default_rng(3).standard_normal((8, 3)),
            "act": np.random.default_rng(4).uniform(-1, 1, (8, 2)),
            "rew": np.ones(8),
            "nxt": np.random.default_rng(5).standard_normal((8, 3)),
            "done": np.zeros(8),
        }

        def critic_loss():
            agent_rng_state = np.random.default_rng(77)
            mu, log_std, _ = agent._policy_head(batch["nxt"])
            eps = agent_rng_state.standard_normal(mu.shape)
            z = mu + np.exp(log_std) * eps
            a_next = np.tanh(z)
            logp = np.sum(-0.5 * eps ** 2 - log_std - 0.5 * LOG_2PI - _log1m_tanh2(z), axis=1)
            target = q_target(batch["rew"], batch["done"],
                              agent.soft_value(batch["nxt"], a_next, logp), agent.cfg.gamma)
            qin = np.hstack([batch["obs"], batch["act"]])
            err = agent.q1.forward(qin)[:, 0] - target
            return 0.5 * float(np.mean(err ** 2))

        base = critic_loss()
        agent.q1_target.biases[-1][0] += 1e-3
        agent.q2_target.biases[-1][0] += 1e-3  # shift the twin minimum itself
        assert critic_loss() != pytest.approx(base, abs=1e-12)

    def test_empty_batch_rejected(self):
        agent = SacAgent(3, 2, small_cfg())
        empty = {k: np.zeros((0, 3) if k in ("obs", "nxt") else (0, 2))
                 for k in ("obs", "act", "nxt")}
        empty.update({"rew": np.zeros(0), "done": np.zeros(0)})
        with pytest.raises(ValueError):
            agent.update_critics(empty)


class TestUpdatePolicy:
    def test_gradient_matches_finite_differences(self):
        agent = SacAgent(5, 3, small_cfg(seed=21, hidden=(16, 16)))
        rng = np.random.default_rng(2)
        obs = rng.standard_normal((6, 5))
        eps = rng.standard_normal((6, 3))

        def loss_value():
            out = agent.policy.forward(obs)
            mu, ls_raw = out[:, :3], out[:, 3:]
            ls = np.clip(ls_raw, LOG_STD_MIN, LOG_STD_MAX)
            sigma = np.exp(ls)
            z = mu + sigma * eps
            a = np.tanh(z)
            logp = np.sum(-0.5 * eps ** 2 - ls - 0.5 * LOG_2PI - _log1m_tanh2(z), axis=1)
            qin = np.hstack([obs, a])
            qmin = np.minimum(agent.q1.forward(qin)[:, 0], agent.q2.forward(qin)[:, 0])
            return float(np.mean(agent.alpha * logp - qmin))

        _, _, grads = agent._policy_loss_and_grads(obs, eps)
        params = agent.policy.params()
        h = 1e-5
        worst = 0.0
        for _ in range(100):
            li = int(rng.integers(0, len(params)))
            p = params[li]
            idx = tuple(int(rng.integers(0, s)) for s in p.shape)
            orig = p[idx]
            p[idx] = orig + h
            f1 = loss_value()
            p[idx] = orig - h
            f0 = loss_value()
            p[idx] = orig
            num = (f1 - f0) / (2 * h)
            ana = grads[li][idx]
            worst = max(worst, abs(num - ana) / max(abs(num) + abs(ana), 1e-8))
        assert worst <= 1e-4

    def test_critic_parameters_untouched(self):
        agent = SacAgent(4, 3, small_cfg(seed=5))
        batch = {"obs": np.random.default_rng(0).standard_normal((8, 4))}
        q_before = [p.copy() for p in agent.q1.params() + agent.q2.params()]
        pol_before = [p.copy() for p in agent.policy.params()]
        agent.update_policy(batch)
        for p, b in zip(agent.q1.params() + agent.q2.params(), q_before):
            assert np.array_equal(p, b)
        assert any(not np.array_equal(p, b)
                   for p, b in zip(agent.policy.params(), pol_before))

    def test_bandit_mean_converges_to_entropy_regularized_optimum(self):
        # analytic critic Q(s, a) = -|a|^2: the entropy-regularized optimum has
        # the squashed mean at zero by symmetry
        class BanditAgent(SacAgent):
            def _q_min_with_grad(self, obs, act, scale):
                q = -np.sum(act * act, axis=1)
                dq_da = scale * (-2.0 * act)
                return q, dq_da

        cfg = small_cfg(seed=13, hidden=(32, 32), lr_pi=1e-3)
        agent = BanditAgent(3, 2, cfg)
        agent.log_alpha = np.array([math.log(0.05)])
        rng = np.random.default_rng(1)
        states = rng.standard_normal((64, 3))
        for _ in range(1500):
            agent.update_policy({"obs": states})
        a, _ = agent.sample_action(states, deterministic=True)
        assert float(np.max(np.abs(a))) < 0.05


class TestUpdateTemperature:
    def test_stationary_at_target_entropy(self):
        agent = SacAgent(3, 3, small_cfg())
        before = agent.alpha
        # mean logp == -target_entropy gives exactly zero gradient
        agent.update_temperature(np.full(16, -agent.cfg.target_entropy))
        assert agent.alpha == before

    def test_alpha_rises_when_entropy_too_low(self):
        agent = SacAgent(3, 3, small_cfg())
        before = agent.alpha
        agent.update_temperature(np.full(16, 50.0))  # logp high: entropy low
        assert agent.alpha > before

    def test_alpha_stays_positive(self):
        agent = SacAgent(3, 3, small_cfg())
        rng = np.random.default_rng(0)
        for _ in range(200):
            agent.update_temperature(rng.uniform(-50, 50, 8))
            assert agent.alpha > 0.0


class TestTargetsAndBuffer:
    def test_targets_equal_mains_at_init(self):
        agent = SacAgent(6, 3, small_cfg())
        for p, t in zip(agent.q1.params(), agent.q1_target.params()):
            assert np.array_equal(p, t)
        for p, t in zip(agent.q2.params(), agent.q2_target.params()):
            assert np.array_equal(p, t)

    def test_soft_update_moves_targets(self):
        agent = SacAgent(6, 3, small_cfg())
        agent.q1.weights[0][:] += 1.0
        agent.soft_update_targets()
        diff = agent.q1.weights[0] - agent.q1_target.weights[0]
        assert np.allclose(diff, 1.0 - agent.cfg.tau, atol=1e-12)

    def test_buffer_evicts_oldest_first(self):
        buf = ReplayBuffer(3, 1, 1)
        for i in range(5):
            buf.add([float(i)], [0.0], float(i), [0.0], 0.0)
        assert buf.size == 3
        assert sorted(buf.rew.tolist()) == [2.0, 3.0, 4.0]

    def test_stored_transition_bit_identical(self):
        buf = ReplayBuffer(4, 3, 2)
        obs = np.array([0.1, -0.2, 0.3000000001])
        act = np.array([1 / 3, -2 / 7])
        buf.add(obs, act, 0.123456789123456789, obs * 2, 1.0)
        batch = buf.sample(np.random.default_rng(0), 1)
        assert np.array_equal(batch["obs"][0], obs)
        assert np.array_equal(batch["act"][0], act)
        assert batch["rew"][0] == 0.123456789123456789

    def test_sampling_without_replacement(self):
        buf = ReplayBuffer(64, 1, 1)
        for i in range(64):
            buf.add([float(i)], [0.0], float(i), [0.0], 0.0)
        batch = buf.sample(np.random.default_rng(5), 64)
        assert len(set(batch["rew"].tolist())) == 64

    def test_oversized_batch_rejected(self):
        buf = ReplayBuffer(8, 1, 1)
        buf.add([0.0], [0.0], 0.0, [0.0], 0.0)
        with pytest.raises(ValueError):
            buf.sample(np.random.default_rng(0), 2)


class TestTrainLoop:
    def _env_factory(self, n=8):
        verts = regular_polygon(n).vertices
        cfg = EnvConfig(max_steps=60)
        return lambda: MeshEnv(verts, cfg)

    def test_no_updates_until_buffer_exceeds_batch(self):
        cfg = small_cfg(batch_size=64, total_steps=50, eval_every=1000)
        agent = SacAgent(EnvConfig().observation_size, 3, cfg)
        before = [p.copy() for p in agent.policy.params()]
        train(self._env_factory(), agent, cfg)
        for p, b in zip(agent.policy.params(), before):
            assert np.array_equal(p, b)

    def test_fixed_seed_reproduces_run_exactly(self):
        def one_run():
            cfg = small_cfg(batch_size=16, total_steps=400, eval_every=100,
                            eval_episodes=2, seed=42)
            agent = SacAgent(EnvConfig().observation_size, 3, cfg)
            records = train(self._env_factory(), agent, cfg)
            return records, agent

        rec1, agent1 = one_run()
        rec2, agent2 = one_run()
        assert [r.as_json() for r in rec1] == [r.as_json() for r in rec2]
        for p1, p2 in zip(agent1.policy.params(), agent2.policy.params()):
            assert np.array_equal(p1, p2)
        for p1, p2 in zip(agent1.q1.params(), agent2.q1.params()):
            assert np.array_equal(p1, p2)

    def test_eval_records_emitted_on_schedule(self):
        cfg = small_cfg(batch_size=16, total_steps=300, eval_every=100,
                        eval_episodes=2, seed=1)
        agent = SacAgent(EnvConfig().observation_size, 3, cfg)
        seen = []
        records = train(self._env_factory(), agent, cfg,
                        on_eval=lambda r: seen.append(r.step))
        assert seen == [100, 200, 300]
        assert [r.step for r in records] == seen
        for r in records:
            assert math.isfinite(r.mean_return)
            assert 0.0 <= r.completion_rate <= 1.0


class TestEvaluate:
    def test_zero_episodes_empty(self):
        agent = SacAgent(EnvConfig().observation_size, 3, small_cfg())
        assert evaluate(agent, regular_polygon(8).vertices, 0) == []

    def test_untrained_agent_returns_finite(self):
        agent = SacAgent(EnvConfig().observation_size, 3, small_cfg())
        outs = evaluate(agent, regular_polygon(20).vertices, 2)
        assert len(outs) == 2
        for o in outs:
            assert math.isfinite(o.episode_return)
            assert isinstance(o.completed, bool)

    def test_run_episode_counts_steps(self):
        agent = SacAgent(EnvConfig().observation_size, 3, small_cfg())
        env = MeshEnv(regular_polygon(8).vertices, EnvConfig(max_steps=30))
        out = run_episode(agent, env)
        assert 1 <= out.steps <= 30


class TestCheckpoints:
    def test_round_trip_preserves_behavior(self, tmp_path):
        cfg = small_cfg(seed=77)
        agent = SacAgent(15, 3, cfg)
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, agent, step=123, seed=77, env_cfg=EnvConfig())
        clone, blob = load_checkpoint(path)
        assert blob["step"] == 123
        assert blob["seed"] == 77
        assert blob["env_config"]["fan_beta"] == 6.0
        x = np.random.default_rng(0).standard_normal((20, 15))
        assert np.array_equal(agent.policy.forward(x), clone.policy.forward(x))
        qin = np.random.default_rng(1).standard_normal((20, 18))
        assert np.array_equal(agent.q1_target.forward(qin), clone.q1_target.forward(qin))
        assert clone.alpha == agent.alpha

    def test_rejects_foreign_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"hello": 1}))
        with pytest.raises(ValueError):
            load_checkpoint(path)
