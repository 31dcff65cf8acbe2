"""Run configuration: key=value files merged with command-line overrides.

Files are UTF-8 with '#' comments; flags win over file values. Unknown keys
are rejected. Every run writes its fully resolved config next to its outputs,
and run directories are content-addressed by the hash of that config.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from synther.errors import ConfigError

# key -> (type, default); None default means "required when used"
KNOWN_KEYS: dict[str, tuple[type, object]] = {
    "seed": (int, 0),
    "env": (str, "pointmass"),
    # data collection
    "collect.policy": (str, "random"),
    "collect.n": (int, 50_000),
    "collect.epsilon": (float, 0.0),
    # diffusion (EDMConfig fields)
    "edm.sigma_min": (float, 0.002),
    "edm.sigma_max": (float, 80.0),
    "edm.s_churn": (float, 80.0),
    "edm.s_tmin": (float, 0.05),
    "edm.s_tmax": (float, 50.0),
    "edm.s_noise": (float, 1.003),
    "edm.steps": (int, 128),
    "edm.rho": (float, 7.0),
    "edm.sigma_data": (float, 1.0),
    "edm.p_mean": (float, -1.2),
    "edm.p_std": (float, 1.2),
    "edm.train_steps": (int, 100_000),
    "edm.batch_size": (int, 256),
    "edm.lr": (float, 3e-4),
    "edm.width": (int, 1024),
    "edm.depth": (int, 6),
    "edm.rff_dim": (int, 16),
    "edm.chunk_size": (int, 16_384),
    "edm.clamp_to_data_range": (bool, False),
    # generation
    "generate.count": (int, 5_000_000),
    # metrics
    "metrics.kind": (str, "pearson"),
    "metrics.sample_cap": (int, 100_000),
    "metrics.fig4_rows": (int, 10_000),
    # augmentation
    "augment.kind": (str, "additive"),
    "augment.noise_std": (float, 0.1),
    "augment.target_count": (int, 0),
    # agent
    "agent.gamma": (float, 0.99),
    "agent.tau": (float, 0.005),
    "agent.lr": (float, 3e-4),
    "agent.hidden": (str, "256,256"),
    "agent.batch_size": (int, 256),
    "agent.utd": (int, 1),
    "agent.td3bc_alpha": (float, 2.5),
    "agent.policy_noise": (float, 0.2),
    "agent.noise_clip": (float, 0.5),
    "agent.policy_delay": (int, 2),
    "agent.larger": (bool, False),
    # offline loop
    "offline.steps": (int, 100_000),
    "offline.eval_every": (int, 5_000),
    "offline.eval_episodes": (int, 10),
    # online loop
    "online.steps": (int, 30_000),
    "online.ratio": (float, 0.5),
    "online.gen_every": (int, 1_000),
    "online.gen_count": (int, 10_000),
    "online.diffusion_steps_per_round": (int, 1_000),
    "online.synthetic_capacity": (int, 1_000_000),
    "online.real_capacity": (int, 1_000_000),
    "online.warmup": (int, 1_000),
    "online.enabled": (bool, True),
    "online.eval_every": (int, 2_000),
    "online.eval_episodes": (int, 5),
}


def _parse_value(key: str, raw: str):
    typ, _ = KNOWN_KEYS[key]
    if typ is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from e


class RunConfig:
    """Resolved, typed configuration for one CLI run."""

    def __init__(self, values: dict | None = None):
        self.values = {k: d for k, (_, d) in KNOWN_KEYS.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _parse_value(key, value)
        self.values[key] = value

    def __getitem__(self, key: str):
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    @classmethod
    def from_sources(cls, config_file: str | None, overrides: dict) -> "RunConfig":
        cfg = cls()
        if config_file:
            for key, raw in parse_kv_file(config_file).items():
                cfg.set(key, raw)
        for key, raw in overrides.items():
            cfg.set(key, raw)
        return cfg

    def resolved_text(self) -> str:
        return "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values)) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.resolved_text().encode("utf-8")).hexdigest()[:12]


def parse_kv_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, raw = line.split("=", 1)
        out[key.strip()] = raw.strip()
    return out
