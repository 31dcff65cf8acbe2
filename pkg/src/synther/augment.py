"""Hand-designed augmentation baselines: additive, multiplicative, dynamics.

All schemes perturb only the state and next-state fields, in raw units;
actions, rewards and terminals pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from synther.data import TransitionDataset, TransitionSchema
from synther.errors import InvalidInputError

KINDS = ("additive", "multiplicative", "dynamics")


@dataclass(frozen=True)
class AugmentationScheme:
    kind: str
    noise_std: float = 0.1  # additive
    mult_range: tuple[float, float] = (0.8, 1.2)  # multiplicative
    dyn_range: tuple[float, float] = (0.5, 1.5)  # dynamics

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"kind must be one of {KINDS}")
        if self.noise_std <= 0:
            raise InvalidInputError("noise_std must be positive")
        for lo, hi in (self.mult_range, self.dyn_range):
            if not (0 < lo <= hi):
                raise InvalidInputError("ranges must be positive and ordered")


def augment_rows(
    rows: np.ndarray,
    schema: TransitionSchema,
    scheme: AugmentationScheme,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized augmentation of a batch of rows (one RNG stream)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float32))
    out = rows.copy()
    n = out.shape[0]
    s_sl, ns_sl = schema.state_slice, schema.next_state_slice
    s = out[:, s_sl].astype(np.float64)
    ns = out[:, ns_sl].astype(np.float64)
    if scheme.kind == "additive":
        s = s + rng.normal(0.0, scheme.noise_std, size=s.shape)
        ns = ns + rng.normal(0.0, scheme.noise_std, size=ns.shape)
    elif scheme.kind == "multiplicative":
        eps = rng.uniform(*scheme.mult_range, size=(n, 1))
        s = s * eps
        ns = ns * eps
    else:  # dynamics: scale the next-state delta
        eps = rng.uniform(*scheme.dyn_range, size=(n, 1))
        ns = s + eps * (ns - s)
    out[:, s_sl] = s.astype(np.float32)
    out[:, ns_sl] = ns.astype(np.float32)
    return out


def augment_row(
    row: np.ndarray,
    schema: TransitionSchema,
    scheme: AugmentationScheme,
    rng: np.random.Generator,
) -> np.ndarray:
    return augment_rows(row, schema, scheme, rng)[0]


def upsample_with_augmentation(
    dataset: TransitionDataset,
    scheme: AugmentationScheme,
    target_count: int,
    seed: int,
) -> TransitionDataset:
    """Original rows plus augmented copies of uniformly drawn originals."""
    if target_count < dataset.count:
        raise InvalidInputError("target_count must be >= dataset.count")
    extra = target_count - dataset.count
    if extra == 0:
        return dataset
    rng = np.random.default_rng(seed)
    src = dataset.rows[rng.integers(0, dataset.count, size=extra)]
    aug = augment_rows(src, dataset.schema, scheme, rng)
    if dataset.schema.has_terminal:
        # schemes never touch d, but float32 round-trips are kept exact anyway
        aug[:, dataset.schema.terminal_index] = src[:, dataset.schema.terminal_index]
    return TransitionDataset(dataset.schema, np.concatenate([dataset.rows, aug], axis=0))
