import copy

import numpy as np
import pytest
import torch

from synther import envs
from synther.agents import (
    AgentConfig,
    SACAgent,
    TD3BCAgent,
    evaluate_policy,
    polyak_update,
)
from synther.errors import InvalidInputError

SMALL = AgentConfig(hidden=(32, 32), batch_size=16)


def make_batch(rng, state_dim=3, action_dim=1, n=16, terminal_rate=0.2):
    s = rng.normal(size=(n, state_dim)).astype(np.float32)
    a = rng.uniform(-1, 1, size=(n, action_dim)).astype(np.float32)
    r = rng.normal(size=n).astype(np.float32)
    ns = rng.normal(size=(n, state_dim)).astype(np.float32)
    d = (rng.random(n) < terminal_rate).astype(np.float32)
    return s, a, r, ns, d


class TestPolyak:
    def test_hand_formula(self):
        src = torch.nn.Linear(3, 2)
        tgt = torch.nn.Linear(3, 2)
        before = [p.detach().clone() for p in tgt.parameters()]
        polyak_update(tgt, src, tau=0.25)
        for p_t, p_s, p_0 in zip(tgt.parameters(), src.parameters(), before):
            torch.testing.assert_close(p_t, 0.25 * p_s + 0.75 * p_0)

    def test_tau_one_copies(self):
        src = torch.nn.Linear(3, 2)
        tgt = torch.nn.Linear(3, 2)
        polyak_update(tgt, src, tau=1.0)
        for p_t, p_s in zip(tgt.parameters(), src.parameters()):
            torch.testing.assert_close(p_t, p_s)


class TestTD3BC:
    def test_critic_target_oracle(self):
        cfg = AgentConfig(hidden=(32, 32), batch_size=16, policy_noise=0.0)
        agent = TD3BCAgent(3, 1, 1.0, cfg, seed=0)
        rng = np.random.default_rng(0)
        s, a, r, ns, d = make_batch(rng)
        with torch.no_grad():
            ns_t = torch.as_tensor(ns)
            na = (agent.actor_target(ns_t) * 1.0).clamp(-1.0, 1.0)
            q1t, q2t = agent.critic_target(ns_t, na)
            y = torch.as_tensor(r).reshape(-1, 1) + cfg.gamma * (
                1.0 - torch.as_tensor(d).reshape(-1, 1)
            ) * torch.min(q1t, q2t)
        out = agent.update(s, a, r, ns, d)
        assert out["target_mean"] == pytest.approx(float(y.mean()), abs=1e-6)

    def test_terminal_masks_bootstrap(self):
        cfg = AgentConfig(hidden=(32, 32), batch_size=16, policy_noise=0.0)
        agent = TD3BCAgent(3, 1, 1.0, cfg, seed=1)
        rng = np.random.default_rng(1)
        s, a, r, ns, _ = make_batch(rng)
        d = np.ones_like(r)
        out = agent.update(s, a, r, ns, d)
        assert out["target_mean"] == pytest.approx(float(r.mean()), abs=1e-6)

    def test_policy_delay(self):
        agent = TD3BCAgent(3, 1, 1.0, SMALL, seed=2)  # policy_delay = 2
        rng = np.random.default_rng(2)
        actor_before = [p.detach().clone() for p in agent.actor.parameters()]
        target_before = [p.detach().clone() for p in agent.critic_target.parameters()]
        out1 = agent.update(*make_batch(rng))
        assert "actor" not in out1
        for p, p0 in zip(agent.actor.parameters(), actor_before):
            torch.testing.assert_close(p, p0)
        for p, p0 in zip(agent.critic_target.parameters(), target_before):
            torch.testing.assert_close(p, p0)
        out2 = agent.update(*make_batch(rng))
        assert "actor" in out2
        assert any(
            not torch.equal(p, p0)
            for p, p0 in zip(agent.actor.parameters(), actor_before)
        )
        assert any(
            not torch.equal(p, p0)
            for p, p0 in zip(agent.critic_target.parameters(), target_before)
        )

    def test_act_bounds_and_normalization(self):
        agent = TD3BCAgent(3, 2, 0.5, SMALL, seed=3)
        obs = np.array([10.0, -10.0, 0.0])
        a = agent.act(obs)
        assert a.shape == (2,)
        assert np.all(np.abs(a) <= 0.5)
        # scaling the normalization must change the policy input, hence the action
        agent.set_state_normalization(np.zeros(3), np.full(3, 100.0))
        b = agent.act(obs)
        assert not np.allclose(a, b)

    def test_determinism(self):
        outs = []
        for _ in range(2):
            agent = TD3BCAgent(3, 1, 1.0, SMALL, seed=7)
            rng = np.random.default_rng(7)
            for _ in range(4):
                out = agent.update(*make_batch(rng))
            outs.append((out["critic"], agent.act(np.ones(3))))
        assert outs[0][0] == outs[1][0]
        np.testing.assert_array_equal(outs[0][1], outs[1][1])


class TestSAC:
    def test_terminal_masks_bootstrap(self):
        agent = SACAgent(3, 1, 1.0, SMALL, seed=0)
        rng = np.random.default_rng(0)
        s, a, r, ns, _ = make_batch(rng)
        d = np.ones_like(r)
        out = agent.update(s, a, r, ns, d)
        assert out["target_mean"] == pytest.approx(float(r.mean()), abs=1e-6)

    def test_polyak_applied_every_update(self):
        agent = SACAgent(3, 1, 1.0, SMALL, seed=1)
        rng = np.random.default_rng(1)
        target_before = copy.deepcopy(agent.critic_target)
        agent.update(*make_batch(rng))
        tau = SMALL.tau
        for p_t, p_c, p_0 in zip(
            agent.critic_target.parameters(),
            agent.critic.parameters(),
            target_before.parameters(),
        ):
            torch.testing.assert_close(p_t, tau * p_c + (1 - tau) * p_0)

    def test_alpha_positive_and_learned(self):
        agent = SACAgent(3, 1, 1.0, SMALL, seed=2)
        a0 = agent.alpha
        assert a0 == pytest.approx(SMALL.init_temperature)
        rng = np.random.default_rng(2)
        for _ in range(5):
            out = agent.update(*make_batch(rng))
        assert out["alpha"] > 0.0
        assert out["alpha"] != a0

    def test_act_bounds_and_stochasticity(self):
        agent = SACAgent(3, 2, 2.0, SMALL, seed=3)
        obs = np.zeros(3)
        det1 = agent.act(obs, deterministic=True)
        det2 = agent.act(obs, deterministic=True)
        np.testing.assert_array_equal(det1, det2)
        assert np.all(np.abs(det1) <= 2.0)
        samples = np.stack([agent.act(obs) for _ in range(20)])
        assert np.all(np.abs(samples) <= 2.0)
        assert samples.std(axis=0).max() > 0.0

    def test_determinism(self):
        outs = []
        for _ in range(2):
            agent = SACAgent(3, 1, 1.0, SMALL, seed=9)
            rng = np.random.default_rng(9)
            for _ in range(4):
                out = agent.update(*make_batch(rng))
            outs.append(out["critic"])
        assert outs[0] == outs[1]


class TestEvaluate:
    def test_deterministic_and_shape(self):
        env = envs.make_env("pendulum")
        agent = SACAgent(3, 1, 2.0, SMALL, seed=0)
        a = evaluate_policy(env, agent, episodes=3, seed=11)
        b = evaluate_policy(envs.make_env("pendulum"), agent, episodes=3, seed=11)
        assert a.shape == (3,)
        np.testing.assert_array_equal(a, b)

    def test_seed_varies_returns(self):
        env = envs.make_env("pendulum")
        agent = SACAgent(3, 1, 2.0, SMALL, seed=0)
        a = evaluate_policy(env, agent, episodes=3, seed=11)
        b = evaluate_policy(env, agent, episodes=3, seed=12)
        assert not np.array_equal(a, b)

    def test_bad_episode_count(self):
        with pytest.raises(InvalidInputError):
            evaluate_policy(envs.make_env("pendulum"), SACAgent(3, 1, 2.0, SMALL), episodes=0)


class TestConfig:
    def test_larger_variant(self):
        big = SMALL.larger()
        assert big.hidden == (512, 512, 512)
        assert big.batch_size == 1024

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            AgentConfig(gamma=1.5)
