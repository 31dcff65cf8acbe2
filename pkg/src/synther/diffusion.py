"""EDM-style diffusion over flattened transitions.

The denoiser operates in normalized space throughout; `generate` maps back to
raw units and rounds terminal flags. Sampling routines accept any callable
`denoise(x, sigma) -> x_hat` so analytic denoisers can be swapped in for the
learned network.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields, replace

import numpy as np

from synther import nn
from synther.data import (
    Normalizer,
    TransitionDataset,
    TransitionSchema,
    normalize,
    threshold_terminals,
)
from synther.errors import FormatError, InvalidInputError, NumericError

MAGIC_MODEL = b"SYNTHD1\0"


@dataclass(frozen=True)
class EDMConfig:
    # sampler (ImageNet-64 defaults)
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    s_churn: float = 80.0
    s_tmin: float = 0.05
    s_tmax: float = 50.0
    s_noise: float = 1.003
    steps: int = 128
    rho: float = 7.0
    # data + training
    sigma_data: float = 1.0  # rows are pre-normalized
    p_mean: float = -1.2  # ln(sigma) ~ N(p_mean, p_std^2) during training
    p_std: float = 1.2
    train_steps: int = 100_000
    batch_size: int = 256
    lr: float = 3e-4
    # network
    width: int = 1024
    depth: int = 6
    rff_dim: int = 16
    # generation
    chunk_size: int = 16_384
    clamp_to_data_range: bool = False

    def __post_init__(self):
        if not (0 < self.sigma_min < self.sigma_max):
            raise InvalidInputError("need 0 < sigma_min < sigma_max")
        if self.steps < 2:
            raise InvalidInputError("need at least 2 sampling steps")
        if not (self.s_tmin < self.s_tmax):
            raise InvalidInputError("need s_tmin < s_tmax")

    def with_overrides(self, **kwargs) -> "EDMConfig":
        return replace(self, **kwargs)


def precondition(sigma, sigma_data: float):
    """EDM preconditioning coefficients (c_skip, c_out, c_in, c_noise)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0) or sigma_data <= 0:
        raise InvalidInputError("sigma and sigma_data must be positive")
    s2 = sigma**2 + sigma_data**2
    c_skip = sigma_data**2 / s2
    c_out = sigma * sigma_data / np.sqrt(s2)
    c_in = 1.0 / np.sqrt(s2)
    c_noise = np.log(sigma) / 4.0
    return c_skip, c_out, c_in, c_noise


def loss_weight(sigma, sigma_data: float):
    """lambda(sigma) = (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2."""
    sigma = np.asarray(sigma, dtype=np.float64)
    return (sigma**2 + sigma_data**2) / (sigma * sigma_data) ** 2


def sigma_schedule(config: EDMConfig) -> np.ndarray:
    """Decreasing noise levels sigma_0..sigma_{N-1} plus the final 0."""
    n = config.steps
    inv_rho = 1.0 / config.rho
    i = np.arange(n, dtype=np.float64)
    sig = (
        config.sigma_max**inv_rho
        + i / (n - 1) * (config.sigma_min**inv_rho - config.sigma_max**inv_rho)
    ) ** config.rho
    return np.append(sig, 0.0)


class DiffusionModel:
    """Residual-MLP denoiser + config + normalizer over one transition schema."""

    def __init__(
        self,
        schema: TransitionSchema,
        config: EDMConfig | None = None,
        normalizer: Normalizer | None = None,
        seed: int = 0,
        net: nn.ResidualMLP | None = None,
    ):
        self.schema = schema
        self.config = config or EDMConfig()
        self.normalizer = normalizer
        if net is None:
            net = nn.ResidualMLP(
                schema.row_dim,
                schema.row_dim,
                width=self.config.width,
                depth=self.config.depth,
                rff_dim=self.config.rff_dim,
                seed=seed,
            )
        if net.in_dim != schema.row_dim or net.out_dim != schema.row_dim:
            raise InvalidInputError("network dims must equal schema.row_dim")
        self.net = net
        self.adam = nn.AdamState.init(self.net.params)

    # -- denoising ---------------------------------------------------------

    def denoise(self, x: np.ndarray, sigma) -> np.ndarray:
        """D(x; sigma) on normalized rows; sigma is scalar or per-row."""
        x = np.asarray(x, dtype=np.float32)
        sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (x.shape[0],))
        c_skip, c_out, c_in, c_noise = precondition(sigma, self.config.sigma_data)
        f, _ = self.net.forward((c_in[:, None] * x).astype(np.float32), c_noise)
        return (c_skip[:, None] * x + c_out[:, None] * f).astype(np.float32)

    def score(self, x: np.ndarray, sigma) -> np.ndarray:
        """Estimate of grad_x log p(x; sigma) = (D(x;sigma) - x) / sigma^2."""
        sigma = np.asarray(sigma, dtype=np.float64)
        d = self.denoise(x, sigma)
        s2 = np.broadcast_to(sigma**2, (x.shape[0],))[:, None]
        return ((d - np.asarray(x)) / s2).astype(np.float32)

    # -- training ----------------------------------------------------------

    def training_loss(self, batch: np.ndarray, rng: np.random.Generator):
        """Weighted denoising loss and its exact parameter gradients.

        batch must already be in normalized space.
        """
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim != 2 or batch.shape[0] == 0:
            raise InvalidInputError("batch must be a non-empty 2-D array")
        b = batch.shape[0]
        cfg = self.config
        sigma = np.exp(rng.normal(cfg.p_mean, cfg.p_std, size=b))
        eps = rng.standard_normal(batch.shape) * sigma[:, None]
        x_noised = (batch + eps).astype(np.float32)
        c_skip, c_out, c_in, c_noise = precondition(sigma, cfg.sigma_data)
        f, cache = self.net.forward((c_in[:, None] * x_noised).astype(np.float32), c_noise)
        d = c_skip[:, None] * x_noised + c_out[:, None] * f
        resid = d - batch
        lam = loss_weight(sigma, cfg.sigma_data)
        loss = float(np.mean(lam * np.sum(resid.astype(np.float64) ** 2, axis=1)))
        d_grad = (2.0 / b) * lam[:, None] * resid
        f_grad = (c_out[:, None] * d_grad).astype(np.float32)
        grads, _ = self.net.backward(cache, f_grad)
        return loss, grads

    def train(
        self,
        dataset: TransitionDataset,
        seed: int = 0,
        train_steps: int | None = None,
        batch_size: int | None = None,
        lr: float | None = None,
        log_every: int = 500,
    ) -> list[tuple[int, float]]:
        """Adam + cosine annealing on the denoising loss; returns a loss trace."""
        if self.normalizer is None:
            raise InvalidInputError("fit and attach a normalizer before training")
        steps = train_steps if train_steps is not None else self.config.train_steps
        bs = batch_size if batch_size is not None else self.config.batch_size
        lr0 = lr if lr is not None else self.config.lr
        rows = normalize(dataset, self.normalizer).rows
        rng = np.random.default_rng(seed)
        trace = []
        for step in range(steps):
            idx = rng.integers(0, rows.shape[0], size=bs)
            loss, grads = self.training_loss(rows[idx], rng)
            if not np.isfinite(loss):
                raise NumericError(f"training diverged at step {step}: loss={loss}")
            nn.adam_step(self.adam, self.net.params, grads, cosine_lr(step, steps, lr0))
            if step % log_every == 0 or step == steps - 1:
                trace.append((step, loss))
        return trace

    # -- sampling ----------------------------------------------------------

    def generate(self, count: int, seed: int = 0) -> TransitionDataset:
        """Draw `count` synthetic transitions in raw units, terminals rounded.

        Chunks derive independent RNG streams from (seed, chunk index), so
        serial and parallel chunk evaluation agree bit for bit.
        """
        if self.normalizer is None:
            raise InvalidInputError("model has no normalizer attached")
        cfg = self.config
        chunks = []
        start = 0
        chunk_idx = 0
        while start < count:
            n = min(cfg.chunk_size, count - start)
            rng = np.random.default_rng([seed, chunk_idx])
            x = sample(self.denoise, n, self.schema.row_dim, cfg, rng)
            bad = ~np.all(np.isfinite(x), axis=1)
            if np.any(bad):
                retry_rng = np.random.default_rng([seed, chunk_idx, 1])
                x[bad] = sample(self.denoise, int(bad.sum()), self.schema.row_dim, cfg, retry_rng)
                if not np.all(np.isfinite(x)):
                    raise NumericError("non-finite samples persisted after one retry")
            chunks.append(x)
            start += n
            chunk_idx += 1
        rows = (
            np.concatenate(chunks, axis=0)
            if chunks
            else np.zeros((0, self.schema.row_dim), dtype=np.float32)
        )
        rows = self.normalizer.invert(rows.astype(np.float64)).astype(np.float32)
        if self.schema.has_terminal:
            rows = threshold_terminals(rows, self.schema)
        return TransitionDataset(self.schema, rows)


def cosine_lr(step: int, total: int, lr0: float) -> float:
    return nn.cosine_lr(step, total, lr0)


def sample_step(
    denoise,
    x: np.ndarray,
    sigma_i: float,
    sigma_next: float,
    config: EDMConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One stochastic-churn Heun step from sigma_i down to sigma_next."""
    if not (sigma_i > sigma_next >= 0):
        raise InvalidInputError("need sigma_i > sigma_next >= 0")
    gamma = 0.0
    if config.s_churn > 0 and config.s_tmin <= sigma_i <= config.s_tmax:
        gamma = min(config.s_churn / config.steps, np.sqrt(2.0) - 1.0)
    sigma_hat = sigma_i * (1.0 + gamma)
    if gamma > 0:
        noise = rng.standard_normal(x.shape)
        x = x + np.sqrt(sigma_hat**2 - sigma_i**2) * config.s_noise * noise
    d_cur = (x - denoise(x, sigma_hat)) / sigma_hat
    x_next = x + (sigma_next - sigma_hat) * d_cur
    if sigma_next > 0:
        d_next = (x_next - denoise(x_next, sigma_next)) / sigma_next
        x_next = x + (sigma_next - sigma_hat) * 0.5 * (d_cur + d_next)
    return x_next


def sample(
    denoise,
    count: int,
    dim: int,
    config: EDMConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run the full sigma schedule from pure noise; returns normalized rows."""
    sigmas = sigma_schedule(config)
    x = rng.standard_normal((count, dim)) * sigmas[0]
    for i in range(len(sigmas) - 1):
        x = sample_step(denoise, x, sigmas[i], sigmas[i + 1], config, rng)
    return x.astype(np.float32)


# ---------------------------------------------------------------------------
# Checkpoints: nn-core weight block, then config key=value block, then schema
# and normalizer payloads.


def save_model(model: DiffusionModel, path) -> None:
    cfg_text = "\n".join(
        f"{f.name}={getattr(model.config, f.name)}" for f in fields(EDMConfig)
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC_MODEL)
        nn.save_weights(model.net, f)
        f.write(struct.pack("<I", len(cfg_text)))
        f.write(cfg_text)
        f.write(
            struct.pack(
                "<IIB",
                model.schema.state_dim,
                model.schema.action_dim,
                1 if model.schema.has_terminal else 0,
            )
        )
        has_norm = model.normalizer is not None
        f.write(struct.pack("<B", 1 if has_norm else 0))
        if has_norm:
            nrm = model.normalizer
            f.write(nrm.mean.astype("<f8").tobytes())
            f.write(nrm.std.astype("<f8").tobytes())
            f.write(nrm.terminal_mask.astype("<u1").tobytes())


def load_model(path) -> DiffusionModel:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC_MODEL))
        if magic != MAGIC_MODEL:
            raise FormatError("bad model magic at offset 0")
        net = nn.load_weights(f)
        (cfg_len,) = struct.unpack("<I", f.read(4))
        cfg_text = f.read(cfg_len).decode("utf-8")
        kv = dict(line.split("=", 1) for line in cfg_text.splitlines() if line)
        cfg = _config_from_kv(kv)
        state_dim, action_dim, has_terminal = struct.unpack("<IIB", f.read(9))
        schema = TransitionSchema(state_dim, action_dim, bool(has_terminal))
        (has_norm,) = struct.unpack("<B", f.read(1))
        normalizer = None
        if has_norm:
            d = schema.row_dim
            mean = np.frombuffer(f.read(d * 8), dtype="<f8")
            std = np.frombuffer(f.read(d * 8), dtype="<f8")
            mask = np.frombuffer(f.read(d), dtype="<u1").astype(bool)
            normalizer = Normalizer(mean=mean, std=std, terminal_mask=mask)
    return DiffusionModel(schema, config=cfg, normalizer=normalizer, net=net)


def _config_from_kv(kv: dict[str, str]) -> EDMConfig:
    out = {}
    for f in fields(EDMConfig):
        if f.name not in kv:
            continue
        raw = kv[f.name]
        if f.type == "bool":
            out[f.name] = raw in ("True", "true", "1")
        elif f.type == "int":
            out[f.name] = int(raw)
        else:
            out[f.name] = float(raw)
    return EDMConfig(**out)
