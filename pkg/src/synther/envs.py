"""Deterministic toy control environments with exposed ground-truth dynamics.

Both environments expose `oracle_step(state, action)`, the pure closed-form
transition usable on arbitrary states, which makes exact dynamics-MSE
evaluation possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from synther.data import TransitionDataset, TransitionSchema
from synther.errors import ConfigError, InvalidDomainError, InvalidInputError, InvalidStateError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: float
    action_high: float
    max_episode_len: int
    has_terminal: bool

    def schema(self) -> TransitionSchema:
        return TransitionSchema(self.state_dim, self.action_dim, self.has_terminal)


class PointMass2D:
    """Velocity-damped point mass seeking the goal (1, 1).

    State (x, y, vx, vy); action (ax, ay) in [-1, 1]^2.
    v' = 0.95 v + 0.1 a, p' = p + 0.05 v'; reward = -|p' - g|;
    terminal when |p' - g| < 0.1, truncation at 200 steps.
    """

    GOAL = np.array([1.0, 1.0])
    DAMP = 0.95
    ACCEL = 0.1
    DT = 0.05
    GOAL_RADIUS = 0.1

    spec = EnvSpec(
        name="pointmass",
        state_dim=4,
        action_dim=2,
        action_low=-1.0,
        action_high=1.0,
        max_episode_len=200,
        has_terminal=True,
    )

    def __init__(self):
        self._state = None
        self._t = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        p = rng.uniform(-1.0, 1.0, size=2)
        self._state = np.concatenate([p, np.zeros(2)])
        self._t = 0
        return self._state.copy()

    def oracle_step(self, state, action):
        """Pure transition: returns (next_state, reward); no episode bookkeeping."""
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (4,) or not np.all(np.isfinite(state)):
            raise InvalidDomainError("state must be a finite 4-vector")
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        v = self.DAMP * state[2:] + self.ACCEL * a
        p = state[:2] + self.DT * v
        reward = -float(np.linalg.norm(p - self.GOAL))
        return np.concatenate([p, v]), reward

    def step(self, action):
        if self._state is None or not np.all(np.isfinite(self._state)):
            raise InvalidStateError("environment must be reset to a finite state")
        ns, reward = self.oracle_step(self._state, action)
        self._t += 1
        terminal = float(np.linalg.norm(ns[:2] - self.GOAL) < self.GOAL_RADIUS)
        truncated = self._t >= self.spec.max_episode_len and terminal == 0.0
        self._state = ns
        return ns.copy(), reward, terminal, truncated


class Pendulum:
    """Torque-limited pendulum swing-up with (cos, sin, angular velocity) obs.

    theta_dot' = clip(theta_dot + (3g/2l) sin(theta) dt + (3/ml^2) u dt, +-8);
    theta' = theta + theta_dot' dt; reward = -(wrap(theta)^2 + 0.1 theta_dot^2
    + 0.001 u^2) evaluated at the pre-update state. No terminals; 200-step
    episodes.
    """

    G = 10.0
    L = 1.0
    M = 1.0
    DT = 0.05
    MAX_SPEED = 8.0
    MAX_TORQUE = 2.0

    spec = EnvSpec(
        name="pendulum",
        state_dim=3,
        action_dim=1,
        action_low=-2.0,
        action_high=2.0,
        max_episode_len=200,
        has_terminal=False,
    )

    def __init__(self):
        self._theta = None
        self._theta_dot = None
        self._t = 0

    @staticmethod
    def _wrap(theta: float) -> float:
        return ((theta + np.pi) % (2 * np.pi)) - np.pi

    def _obs(self) -> np.ndarray:
        return np.array([np.cos(self._theta), np.sin(self._theta), self._theta_dot])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._theta = rng.uniform(-np.pi, np.pi)
        self._theta_dot = rng.uniform(-1.0, 1.0)
        self._t = 0
        return self._obs()

    def _dynamics(self, theta: float, theta_dot: float, u: float):
        u = float(np.clip(u, -self.MAX_TORQUE, self.MAX_TORQUE))
        new_dot = theta_dot + (
            3.0 * self.G / (2.0 * self.L) * np.sin(theta)
            + 3.0 / (self.M * self.L**2) * u
        ) * self.DT
        new_dot = float(np.clip(new_dot, -self.MAX_SPEED, self.MAX_SPEED))
        new_theta = theta + new_dot * self.DT
        reward = -(self._wrap(theta) ** 2 + 0.1 * theta_dot**2 + 0.001 * u**2)
        return new_theta, new_dot, reward

    def oracle_step(self, state, action):
        """Consumes (cos, sin, theta_dot) observations; reconstructs the angle.

        The (cos, sin) pair must lie within 0.2 of the unit circle; closer
        deviations are renormalized.
        """
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (3,) or not np.all(np.isfinite(state)):
            raise InvalidDomainError("state must be a finite 3-vector")
        norm = float(np.hypot(state[0], state[1]))
        if abs(norm - 1.0) > 0.2:
            raise InvalidDomainError(f"(cos, sin) norm {norm:.3f} deviates > 0.2 from 1")
        theta = float(np.arctan2(state[1], state[0]))
        u = float(np.asarray(action).reshape(-1)[0])
        new_theta, new_dot, reward = self._dynamics(theta, state[2], u)
        return np.array([np.cos(new_theta), np.sin(new_theta), new_dot]), reward

    def step(self, action):
        if self._theta is None or not np.isfinite(self._theta):
            raise InvalidStateError("environment must be reset to a finite state")
        u = float(np.asarray(action).reshape(-1)[0])
        self._theta, self._theta_dot, reward = self._dynamics(
            self._theta, self._theta_dot, u
        )
        self._t += 1
        truncated = self._t >= self.spec.max_episode_len
        return self._obs(), reward, 0.0, truncated


ENVS = {"pointmass": PointMass2D, "pendulum": Pendulum}


def make_env(name: str):
    if name not in ENVS:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVS)}")
    return ENVS[name]()


def random_policy(env, rng: np.random.Generator):
    spec = env.spec

    def act(obs):
        return rng.uniform(spec.action_low, spec.action_high, size=spec.action_dim)

    return act


def collect_dataset(
    env,
    policy,
    n_transitions: int,
    seed: int,
    epsilon: float = 0.0,
) -> TransitionDataset:
    """Roll out a policy and flatten the transitions into a dataset.

    `policy` is "random" or a callable obs -> action. With epsilon > 0 a
    uniform random action replaces the policy's with that probability
    (medium-replay-style mixed data).
    """
    if n_transitions < 1:
        raise InvalidInputError("need n_transitions >= 1")
    spec = env.spec
    rng = np.random.default_rng(seed)
    if policy == "random":
        act = random_policy(env, rng)
    elif callable(policy):
        act = policy
    else:
        raise ConfigError(f"policy must be 'random' or a callable, got {policy!r}")
    schema = spec.schema()
    rows = np.zeros((n_transitions, schema.row_dim), dtype=np.float32)
    obs = env.reset(rng)
    for i in range(n_transitions):
        if epsilon > 0.0 and rng.random() < epsilon:
            a = rng.uniform(spec.action_low, spec.action_high, size=spec.action_dim)
        else:
            a = np.asarray(act(obs), dtype=np.float64).reshape(spec.action_dim)
        a = np.clip(a, spec.action_low, spec.action_high)
        next_obs, reward, terminal, truncated = env.step(a)
        row = np.concatenate([obs, a, [reward], next_obs])
        if schema.has_terminal:
            row = np.concatenate([row, [terminal]])
        rows[i] = row
        if terminal or truncated:
            obs = env.reset(rng)
        else:
            obs = next_obs
    return TransitionDataset(schema, rows)
