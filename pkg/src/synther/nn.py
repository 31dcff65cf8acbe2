"""Minimal neural toolkit for the denoiser: residual MLP, RFF noise embedding,
exact reverse-mode gradients, Adam, cosine annealing and checkpoint I/O.

Everything is plain numpy. The production dtype is float32; float64 exists for
gradient checking only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from synther.errors import FormatError, InvalidInputError, InvalidStateError, NumericError

MAGIC_WEIGHTS = b"SYNTHW1\0"


class RFFEmbedding:
    """Random Fourier features of a scalar noise code.

    Frequencies are drawn N(0, 1) once and frozen; output is
    [sin(2 pi f_i c), cos(2 pi f_i c)] of length 2 * rff_dim.
    """

    def __init__(self, rff_dim: int, rng: np.random.Generator, frequencies=None):
        if frequencies is not None:
            self.frequencies = np.asarray(frequencies, dtype=np.float64)
        else:
            self.frequencies = rng.standard_normal(rff_dim)
        self.frequencies.setflags(write=False)
        if self.frequencies.shape != (rff_dim,):
            raise InvalidInputError("frequencies must have shape (rff_dim,)")
        self.rff_dim = rff_dim

    @property
    def out_dim(self) -> int:
        return 2 * self.rff_dim

    def __call__(self, c: np.ndarray, dtype=np.float32) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64).reshape(-1, 1)
        phase = 2.0 * np.pi * c * self.frequencies[None, :]
        return np.concatenate([np.sin(phase), np.cos(phase)], axis=1).astype(dtype)


class ResidualMLP:
    """MLP denoiser with per-block skip connections.

    Layout: h = W_in [x, rff(c)] + b_in, then `depth` blocks of
    h <- W_k relu(h) + b_k + h, then out = W_out h + b_out.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        width: int,
        depth: int,
        rff_dim: int = 16,
        seed: int = 0,
        dtype=np.float32,
    ):
        if min(in_dim, out_dim, width) <= 0 or depth < 0 or rff_dim <= 0:
            raise InvalidInputError("bad network dimensions")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.width = width
        self.depth = depth
        self.rff_dim = rff_dim
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.rff = RFFEmbedding(rff_dim, rng)
        fan0 = in_dim + self.rff.out_dim
        self.params: dict[str, np.ndarray] = {}
        self.params["w_in"] = self._he(rng, fan0, width)
        self.params["b_in"] = np.zeros(width, dtype=dtype)
        for k in range(depth):
            self.params[f"w_{k}"] = self._he(rng, width, width)
            self.params[f"b_{k}"] = np.zeros(width, dtype=dtype)
        self.params["w_out"] = self._he(rng, width, out_dim)
        self.params["b_out"] = np.zeros(out_dim, dtype=dtype)

    def _he(self, rng, fan_in, fan_out):
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        return w.astype(self.dtype)

    def param_names(self) -> list[str]:
        names = ["w_in", "b_in"]
        for k in range(self.depth):
            names += [f"w_{k}", f"b_{k}"]
        return names + ["w_out", "b_out"]

    def num_params(self) -> int:
        fan0 = self.in_dim + 2 * self.rff_dim
        return (
            fan0 * self.width
            + self.width
            + self.depth * (self.width * self.width + self.width)
            + self.width * self.out_dim
            + self.out_dim
        )

    def astype(self, dtype) -> "ResidualMLP":
        """Copy of the net in another dtype (float64 for gradient checks)."""
        net = ResidualMLP.__new__(ResidualMLP)
        net.__dict__.update(self.__dict__)
        net.dtype = dtype
        net.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return net

    def forward(self, x: np.ndarray, c_noise: np.ndarray):
        """Returns (output, cache); cache feeds backward()."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise InvalidInputError(f"x must be (B, {self.in_dim})")
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite network input")
        emb = self.rff(np.asarray(c_noise), dtype=self.dtype)
        if emb.shape[0] != x.shape[0]:
            raise InvalidInputError("c_noise batch does not match x")
        p = self.params
        h0 = np.concatenate([x, emb], axis=1)
        h = h0 @ p["w_in"] + p["b_in"]
        pre = []  # block inputs (pre-activation of each block)
        for k in range(self.depth):
            pre.append(h)
            a = np.maximum(h, 0)
            h = a @ p[f"w_{k}"] + p[f"b_{k}"] + h
        out = h @ p["w_out"] + p["b_out"]
        cache = {"h0": h0, "pre": pre, "h_last": h, "batch": x.shape[0]}
        return out, cache

    def backward(self, cache, out_grad: np.ndarray):
        """Exact gradients of sum(out * out_grad); returns (grads, x_grad)."""
        if not isinstance(cache, dict) or "h0" not in cache:
            raise InvalidStateError("cache does not come from forward()")
        if len(cache["pre"]) != self.depth:
            raise InvalidStateError("cache depth does not match network")
        out_grad = np.asarray(out_grad, dtype=self.dtype)
        p = self.params
        grads = {}
        grads["w_out"] = cache["h_last"].T @ out_grad
        grads["b_out"] = out_grad.sum(axis=0)
        gh = out_grad @ p["w_out"].T
        for k in reversed(range(self.depth)):
            h_in = cache["pre"][k]
            a = np.maximum(h_in, 0)
            grads[f"w_{k}"] = a.T @ gh
            grads[f"b_{k}"] = gh.sum(axis=0)
            ga = gh @ p[f"w_{k}"].T
            gh = gh + ga * (h_in > 0)
        grads["w_in"] = cache["h0"].T @ gh
        grads["b_in"] = gh.sum(axis=0)
        g_h0 = gh @ p["w_in"].T
        return grads, g_h0[:, : self.in_dim]


@dataclass
class AdamState:
    """Bias-corrected Adam; moments mirror the parameter dict."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(state: AdamState, params: dict, grads: dict, lr_t: float) -> None:
    """In-place bias-corrected Adam update with step size lr_t."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, g in grads.items():
        if k not in params:
            raise InvalidInputError(f"unknown parameter {k}")
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        params[k] -= (lr_t * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(
            params[k].dtype
        )


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Cosine annealing from lr0 to 0; steps past the end clamp to 0."""
    if step < 0:
        raise InvalidInputError("step must be non-negative")
    if step >= total_steps:
        return 0.0
    return lr0 * (1.0 + np.cos(np.pi * step / total_steps)) / 2.0


def grad_check(net: ResidualMLP, x, c, h: float = 1e-5, max_coords: int | None = None,
               seed: int = 0) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    Loss is 0.5 * sum(out**2). Use a float64 net for meaningful tolerances.
    """
    x = np.asarray(x, dtype=net.dtype)
    c = np.asarray(c)

    def loss():
        out, _ = net.forward(x, c)
        return 0.5 * float(np.sum(out.astype(np.float64) ** 2))

    out, cache = net.forward(x, c)
    grads, _ = net.backward(cache, out)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in net.param_names():
        w = net.params[name]
        flat = w.reshape(-1)
        idxs = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idxs = rng.choice(flat.size, size=max_coords, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            lp = loss()
            flat[i] = orig - h
            lm = loss()
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            an = float(grads[name].reshape(-1)[i])
            denom = max(abs(fd), abs(an), 1e-8)
            worst = max(worst, abs(fd - an) / denom)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint format: magic, u32 hyperparams, RFF frequencies, flat f32 params
# in param_names() order.


def save_weights(net: ResidualMLP, path_or_file) -> None:
    if hasattr(path_or_file, "write"):
        _write_weights(path_or_file, net)
        return
    with open(path_or_file, "wb") as f:
        _write_weights(f, net)


def _write_weights(f, net: ResidualMLP) -> None:
        f.write(MAGIC_WEIGHTS)
        f.write(
            struct.pack(
                "<5I", net.in_dim, net.out_dim, net.width, net.depth, net.rff_dim
            )
        )
        f.write(net.rff.frequencies.astype("<f8").tobytes())
        for name in net.param_names():
            f.write(net.params[name].astype("<f4").tobytes())


def load_weights(path_or_file) -> ResidualMLP:
    if hasattr(path_or_file, "read"):
        return _read_weights(path_or_file)
    with open(path_or_file, "rb") as f:
        return _read_weights(f)


def _read_weights(f) -> ResidualMLP:
    magic = f.read(len(MAGIC_WEIGHTS))
    if magic != MAGIC_WEIGHTS:
        raise FormatError("bad weights magic at offset 0")
    in_dim, out_dim, width, depth, rff_dim = struct.unpack("<5I", f.read(20))
    freqs = np.frombuffer(f.read(rff_dim * 8), dtype="<f8")
    if freqs.size != rff_dim:
        raise FormatError("truncated RFF frequency block")
    net = ResidualMLP(in_dim, out_dim, width, depth, rff_dim=rff_dim, seed=0)
    net.rff = RFFEmbedding(rff_dim, np.random.default_rng(0), frequencies=freqs)
    for name in net.param_names():
        shape = net.params[name].shape
        n = int(np.prod(shape))
        buf = f.read(n * 4)
        if len(buf) != n * 4:
            raise FormatError(f"truncated parameter block {name}")
        net.params[name] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return net
