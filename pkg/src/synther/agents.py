"""Minimal TD3+BC (offline) and SAC (online) agents on top of torch.

Networks are small MLPs sized by AgentConfig. All updates are plain
single-threaded CPU torch; given fixed seeds the runs are reproducible.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn as tnn
import torch.nn.functional as F

from synther.errors import InvalidInputError


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    hidden: tuple[int, ...] = (256, 256)
    batch_size: int = 256
    utd: int = 1
    # TD3+BC
    td3bc_alpha: float = 2.5
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    # SAC
    init_temperature: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise InvalidInputError("gamma must lie in (0, 1)")
        if not (0.0 < self.tau <= 1.0):
            raise InvalidInputError("tau must lie in (0, 1]")
        if self.utd < 1:
            raise InvalidInputError("utd must be >= 1")

    def larger(self) -> "AgentConfig":
        """The scaled-up preset: 3 hidden layers of 512, batch 1024."""
        return replace(self, hidden=(512, 512, 512), batch_size=1024)


def _mlp(sizes: list[int], out_act=None) -> tnn.Sequential:
    layers: list[tnn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(tnn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            layers.append(tnn.ReLU())
    if out_act is not None:
        layers.append(out_act)
    return tnn.Sequential(*layers)


def polyak_update(target: tnn.Module, source: tnn.Module, tau: float) -> None:
    with torch.no_grad():
        for tp, sp in zip(target.parameters(), source.parameters()):
            tp.mul_(1.0 - tau).add_(sp, alpha=tau)


class TwinCritic(tnn.Module):
    def __init__(self, state_dim, action_dim, hidden):
        super().__init__()
        sizes = [state_dim + action_dim, *hidden, 1]
        self.q1 = _mlp(sizes)
        self.q2 = _mlp(sizes)

    def forward(self, s, a):
        x = torch.cat([s, a], dim=1)
        return self.q1(x), self.q2(x)


class TD3BCAgent:
    """TD3 with a behavior-cloning term; the offline workhorse."""

    def __init__(self, state_dim: int, action_dim: int, max_action: float,
                 config: AgentConfig, seed: int = 0):
        torch.manual_seed(seed)
        self.cfg = config
        self.max_action = float(max_action)
        hidden = list(config.hidden)
        self.actor = _mlp([state_dim, *hidden, action_dim], out_act=tnn.Tanh())
        self.critic = TwinCritic(state_dim, action_dim, hidden)
        self.actor_target = copy.deepcopy(self.actor)
        self.critic_target = copy.deepcopy(self.critic)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=config.lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=config.lr)
        self.total_updates = 0
        # state normalization, set by offline_train
        self.state_mean = np.zeros(state_dim, dtype=np.float32)
        self.state_std = np.ones(state_dim, dtype=np.float32)

    def set_state_normalization(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.state_mean = np.asarray(mean, dtype=np.float32)
        self.state_std = np.asarray(std, dtype=np.float32)

    def act(self, obs: np.ndarray) -> np.ndarray:
        obs = (np.asarray(obs, np.float32) - self.state_mean) / self.state_std
        with torch.no_grad():
            a = self.actor(torch.from_numpy(obs).unsqueeze(0))
        return (self.max_action * a.squeeze(0).numpy()).astype(np.float64)

    def update(self, s, a, r, ns, d) -> dict:
        cfg = self.cfg
        s, a, r, ns, d = (torch.as_tensor(x, dtype=torch.float32) for x in (s, a, r, ns, d))
        r = r.reshape(-1, 1)
        d = d.reshape(-1, 1)
        with torch.no_grad():
            noise = (torch.randn_like(a) * cfg.policy_noise).clamp(
                -cfg.noise_clip, cfg.noise_clip
            )
            na = (self.actor_target(ns) * self.max_action + noise).clamp(
                -self.max_action, self.max_action
            )
            q1t, q2t = self.critic_target(ns, na)
            y = r + cfg.gamma * (1.0 - d) * torch.min(q1t, q2t)
        q1, q2 = self.critic(s, a)
        critic_loss = F.mse_loss(q1, y) + F.mse_loss(q2, y)
        self.critic_opt.zero_grad()
        critic_loss.backward()
        self.critic_opt.step()

        losses = {
            "critic": float(critic_loss.detach()),
            "target_mean": float(y.mean()),
        }
        self.total_updates += 1
        if self.total_updates % cfg.policy_delay == 0:
            pi = self.actor(s) * self.max_action
            q = self.critic.q1(torch.cat([s, pi], dim=1))
            lam = cfg.td3bc_alpha / (q.abs().mean().detach() + 1e-6)
            actor_loss = -lam * q.mean() + F.mse_loss(pi, a)
            self.actor_opt.zero_grad()
            actor_loss.backward()
            self.actor_opt.step()
            polyak_update(self.actor_target, self.actor, cfg.tau)
            polyak_update(self.critic_target, self.critic, cfg.tau)
            losses["actor"] = float(actor_loss.detach())
        return losses


LOG_STD_MIN, LOG_STD_MAX = -10.0, 2.0


class GaussianActor(tnn.Module):
    """Squashed-Gaussian policy head for SAC."""

    def __init__(self, state_dim, action_dim, hidden, max_action):
        super().__init__()
        self.body = _mlp([state_dim, *hidden, 2 * action_dim])
        self.action_dim = action_dim
        self.max_action = max_action

    def forward(self, s, deterministic=False, with_logprob=True):
        mu, log_std = self.body(s).chunk(2, dim=-1)
        log_std = torch.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX)
        std = log_std.exp()
        dist = torch.distributions.Normal(mu, std)
        raw = mu if deterministic else dist.rsample()
        action = torch.tanh(raw)
        logp = None
        if with_logprob:
            logp = dist.log_prob(raw).sum(dim=-1)
            logp = logp - (2.0 * (np.log(2.0) - raw - F.softplus(-2.0 * raw))).sum(dim=-1)
        return self.max_action * action, logp


class SACAgent:
    """Soft actor-critic with twin critics and learned temperature."""

    def __init__(self, state_dim: int, action_dim: int, max_action: float,
                 config: AgentConfig, seed: int = 0):
        torch.manual_seed(seed)
        self.cfg = config
        self.max_action = float(max_action)
        hidden = list(config.hidden)
        self.actor = GaussianActor(state_dim, action_dim, hidden, self.max_action)
        self.critic = TwinCritic(state_dim, action_dim, hidden)
        self.critic_target = copy.deepcopy(self.critic)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=config.lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=config.lr)
        self.log_alpha = torch.tensor(
            float(np.log(config.init_temperature)), requires_grad=True
        )
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=config.lr)
        self.target_entropy = -float(action_dim)
        self.total_updates = 0

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    def act(self, obs: np.ndarray, deterministic: bool = False) -> np.ndarray:
        with torch.no_grad():
            a, _ = self.actor(
                torch.as_tensor(obs, dtype=torch.float32).unsqueeze(0),
                deterministic=deterministic,
                with_logprob=False,
            )
        return a.squeeze(0).numpy().astype(np.float64)

    def update(self, s, a, r, ns, d) -> dict:
        cfg = self.cfg
        s, a, r, ns, d = (torch.as_tensor(x, dtype=torch.float32) for x in (s, a, r, ns, d))
        r = r.reshape(-1, 1)
        d = d.reshape(-1, 1)
        alpha = self.log_alpha.exp().detach()
        with torch.no_grad():
            na, logp_n = self.actor(ns)
            q1t, q2t = self.critic_target(ns, na)
            soft_q = torch.min(q1t, q2t) - alpha * logp_n.unsqueeze(-1)
            y = r + cfg.gamma * (1.0 - d) * soft_q
        q1, q2 = self.critic(s, a)
        critic_loss = F.mse_loss(q1, y) + F.mse_loss(q2, y)
        self.critic_opt.zero_grad()
        critic_loss.backward()
        self.critic_opt.step()

        pi, logp = self.actor(s)
        q1pi, q2pi = self.critic(s, pi)
        actor_loss = (alpha * logp - torch.min(q1pi, q2pi).squeeze(-1)).mean()
        self.actor_opt.zero_grad()
        actor_loss.backward()
        self.actor_opt.step()

        alpha_loss = -(self.log_alpha * (logp.detach() + self.target_entropy)).mean()
        self.alpha_opt.zero_grad()
        alpha_loss.backward()
        self.alpha_opt.step()

        polyak_update(self.critic_target, self.critic, cfg.tau)
        self.total_updates += 1
        return {
            "critic": float(critic_loss.detach()),
            "actor": float(actor_loss.detach()),
            "alpha": float(self.log_alpha.exp().detach()),
            "target_mean": float(y.mean()),
        }


def evaluate_policy(env, agent, episodes: int = 10, seed: int = 0) -> np.ndarray:
    """Per-episode returns under the deterministic policy on fixed seeds."""
    if episodes < 1:
        raise InvalidInputError("need episodes >= 1")
    returns = []
    for ep in range(episodes):
        rng = np.random.default_rng([seed, ep])
        obs = env.reset(rng)
        total = 0.0
        while True:
            if isinstance(agent, SACAgent):
                a = agent.act(obs, deterministic=True)
            else:
                a = agent.act(obs)
            obs, reward, terminal, truncated = env.step(a)
            total += reward
            if terminal or truncated:
                break
        returns.append(total)
    return np.asarray(returns)
