"""Fidelity metrics for synthetic transition data.

Marginal score: per-dimension two-sample KS complement (terminals use the
total-variation complement of the two Bernoulli frequencies). Correlation
score: complement of pairwise Pearson-correlation gaps. Plus min-L2 diversity,
dynamics MSE against an environment oracle, energy distance and compression
accounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from synther.data import Normalizer, TransitionDataset
from synther.errors import InvalidDomainError, InvalidInputError, UndefinedMetricError

METRIC_SAMPLE_CAP = 100_000  # metrics use min(cap, count) rows from each side


@dataclass
class MetricReport:
    marginal: float
    correlation: float
    per_dim_ks: np.ndarray
    per_pair_gap: dict
    n_real: int
    n_synth: int
    correlation_kind: str = "pearson"
    extras: dict = field(default_factory=dict)

    def summary_lines(self) -> list[str]:
        lines = [
            f"marginal={self.marginal:.6f}",
            f"correlation={self.correlation:.6f}",
            f"correlation_kind={self.correlation_kind}",
            f"n_real={self.n_real}",
            f"n_synth={self.n_synth}",
        ]
        lines += [f"{k}={v}" for k, v in sorted(self.extras.items())]
        return lines


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample KS distance via a merged-sort CDF comparison."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size < 1 or b.size < 1:
        raise InvalidInputError("need non-empty samples")
    merged = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, merged, side="right") / a.size
    cdf_b = np.searchsorted(b, merged, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def _cap(rows: np.ndarray, cap: int, seed: int) -> np.ndarray:
    if rows.shape[0] <= cap:
        return rows
    idx = np.random.default_rng(seed).choice(rows.shape[0], size=cap, replace=False)
    return rows[idx]


def marginal_score(
    real: TransitionDataset,
    synth: TransitionDataset,
    sample_cap: int = METRIC_SAMPLE_CAP,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Mean over dims of 1 - KS (continuous) or 1 - TV (terminal)."""
    if real.schema != synth.schema:
        raise InvalidInputError("datasets have different schemas")
    if real.count < 2 or synth.count < 2:
        raise InvalidInputError("need at least 2 rows on each side")
    a = _cap(real.rows, sample_cap, seed)
    b = _cap(synth.rows, sample_cap, seed + 1)
    term = real.schema.terminal_index
    per_dim = np.zeros(real.schema.row_dim)
    for d in range(real.schema.row_dim):
        if term is not None and d == term:
            per_dim[d] = 1.0 - abs(float(a[:, d].mean()) - float(b[:, d].mean()))
        else:
            per_dim[d] = 1.0 - ks_statistic(a[:, d], b[:, d])
    return float(per_dim.mean()), per_dim


def _rankdata(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty_like(order, dtype=np.float64)
    ranks[order] = np.arange(1, x.size + 1)
    # average ties
    x_sorted = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x_sorted[j + 1] == x_sorted[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def correlation_score(
    real: TransitionDataset,
    synth: TransitionDataset,
    kind: str = "pearson",
    sample_cap: int = METRIC_SAMPLE_CAP,
    seed: int = 0,
) -> tuple[float, dict]:
    """Mean over dim pairs of 1 - |rho_real - rho_synth| / 2.

    Dimensions constant in either dataset are excluded from all pairs.
    """
    if real.schema != synth.schema:
        raise InvalidInputError("datasets have different schemas")
    if real.count < 3 or synth.count < 3:
        raise InvalidInputError("need at least 3 rows on each side")
    if kind not in ("pearson", "spearman"):
        raise InvalidInputError(f"unknown correlation kind {kind!r}")
    a = _cap(real.rows, sample_cap, seed).astype(np.float64)
    b = _cap(synth.rows, sample_cap, seed + 1).astype(np.float64)
    keep = [
        d
        for d in range(a.shape[1])
        if a[:, d].std() > 1e-12 and b[:, d].std() > 1e-12
    ]
    if len(keep) < 2:
        raise UndefinedMetricError("fewer than 2 non-constant dimensions")
    if kind == "spearman":
        a = np.column_stack([_rankdata(a[:, d]) for d in keep])
        b = np.column_stack([_rankdata(b[:, d]) for d in keep])
    else:
        a = a[:, keep]
        b = b[:, keep]
    ca = np.corrcoef(a, rowvar=False)
    cb = np.corrcoef(b, rowvar=False)
    gaps = {}
    for i in range(len(keep)):
        for j in range(i + 1, len(keep)):
            gaps[(keep[i], keep[j])] = abs(ca[i, j] - cb[i, j]) / 2.0
    score = float(np.mean([1.0 - g for g in gaps.values()]))
    return score, gaps


def metric_report(
    real: TransitionDataset,
    synth: TransitionDataset,
    kind: str = "pearson",
    sample_cap: int = METRIC_SAMPLE_CAP,
    seed: int = 0,
) -> MetricReport:
    marg, per_dim = marginal_score(real, synth, sample_cap=sample_cap, seed=seed)
    corr, gaps = correlation_score(real, synth, kind=kind, sample_cap=sample_cap, seed=seed)
    return MetricReport(
        marginal=marg,
        correlation=corr,
        per_dim_ks=1.0 - per_dim,
        per_pair_gap=gaps,
        n_real=min(real.count, sample_cap),
        n_synth=min(synth.count, sample_cap),
        correlation_kind=kind,
    )


def min_l2_distances(
    synth: TransitionDataset,
    real: TransitionDataset,
    normalizer: Normalizer,
    real_subsample: int | None = None,
    seed: int = 0,
    chunk: int = 1024,
) -> np.ndarray:
    """Per-synthetic-row minimum L2 distance to the real set, normalized space.

    `real_subsample` trades exactness for speed by searching a uniform subset
    of real rows; subsampled distances upper-bound exact ones.
    """
    if real.count == 0:
        raise InvalidInputError("real dataset is empty")
    ref = normalizer.apply(real.rows.astype(np.float64))
    if real_subsample is not None and real_subsample < ref.shape[0]:
        idx = np.random.default_rng(seed).choice(
            ref.shape[0], size=real_subsample, replace=False
        )
        ref = ref[idx]
    query = normalizer.apply(synth.rows.astype(np.float64))
    ref_sq = np.sum(ref**2, axis=1)
    out = np.empty(query.shape[0])
    for start in range(0, query.shape[0], chunk):
        q = query[start : start + chunk]
        d2 = np.sum(q**2, axis=1)[:, None] - 2.0 * (q @ ref.T) + ref_sq[None, :]
        out[start : start + chunk] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out


def dynamics_mse(synth: TransitionDataset, oracle) -> tuple[np.ndarray, float, int]:
    """Per-row MSE of [s', r] vs the oracle's ground truth, in raw units.

    Returns (per_row_mse_for_valid_rows, mean, n_invalid); rows whose state
    falls outside the oracle's valid domain are excluded but counted.
    """
    schema = synth.schema
    s = synth.rows[:, schema.state_slice].astype(np.float64)
    a = synth.rows[:, schema.action_slice].astype(np.float64)
    r = synth.rows[:, schema.reward_index].astype(np.float64)
    ns = synth.rows[:, schema.next_state_slice].astype(np.float64)
    per_row = []
    n_invalid = 0
    for i in range(synth.count):
        try:
            ns_true, r_true = oracle.oracle_step(s[i], a[i])
        except InvalidDomainError:
            n_invalid += 1
            continue
        diff = np.concatenate([ns[i] - ns_true, [r[i] - r_true]])
        per_row.append(float(np.mean(diff**2)))
    per_row = np.asarray(per_row)
    mean = float(per_row.mean()) if per_row.size else float("nan")
    return per_row, mean, n_invalid


def compression_ratio(n_dataset_floats: int, n_params: int) -> float:
    """Dataset float count over parameter count, rounded to 1 decimal."""
    return round(n_dataset_floats / n_params, 1)


def compression_report(dataset: TransitionDataset, model) -> float:
    return compression_ratio(dataset.count * dataset.schema.row_dim, model.net.num_params())


def energy_distance(a: np.ndarray, b: np.ndarray, max_n: int = 4096, seed: int = 0) -> float:
    """Sample energy distance 2 E|X-Y| - E|X-X'| - E|Y-Y'| (>= 0)."""
    rng = np.random.default_rng(seed)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] > max_n:
        a = a[rng.choice(a.shape[0], size=max_n, replace=False)]
    if b.shape[0] > max_n:
        b = b[rng.choice(b.shape[0], size=max_n, replace=False)]

    def mean_pdist(x, y):
        d2 = (
            np.sum(x**2, axis=1)[:, None]
            - 2.0 * (x @ y.T)
            + np.sum(y**2, axis=1)[None, :]
        )
        return float(np.mean(np.sqrt(np.maximum(d2, 0.0))))

    return 2.0 * mean_pdist(a, b) - mean_pdist(a, a) - mean_pdist(b, b)
