"""Transition tuples, datasets, normalization, replay buffers and file formats.

A transition is the flattened row [s | a | r | s' | d] stored as float32.
Datasets are immutable after construction; buffers are single-writer rings.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from synther.errors import FormatError, InvalidInputError, UnavailableDataError

MAGIC_DATASET = b"SYNTHR1\0"

# Std below this is treated as a constant dimension and mapped to 1.
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TransitionSchema:
    """Dimensions and layout of a flattened transition row."""

    state_dim: int
    action_dim: int
    has_terminal: bool = True

    def __post_init__(self):
        if self.state_dim <= 0 or self.action_dim <= 0:
            raise InvalidInputError("state_dim and action_dim must be positive")

    @property
    def row_dim(self) -> int:
        return 2 * self.state_dim + self.action_dim + 1 + (1 if self.has_terminal else 0)

    # Column slices into a row, in [s | a | r | s' | d] order.
    @property
    def state_slice(self) -> slice:
        return slice(0, self.state_dim)

    @property
    def action_slice(self) -> slice:
        return slice(self.state_dim, self.state_dim + self.action_dim)

    @property
    def reward_index(self) -> int:
        return self.state_dim + self.action_dim

    @property
    def next_state_slice(self) -> slice:
        start = self.state_dim + self.action_dim + 1
        return slice(start, start + self.state_dim)

    @property
    def terminal_index(self) -> int | None:
        return self.row_dim - 1 if self.has_terminal else None

    def terminal_mask(self) -> np.ndarray:
        """Boolean vector marking the terminal column (all False without one)."""
        mask = np.zeros(self.row_dim, dtype=bool)
        if self.has_terminal:
            mask[-1] = True
        return mask

    def csv_header(self) -> list[str]:
        cols = [f"s{i}" for i in range(self.state_dim)]
        cols += [f"a{i}" for i in range(self.action_dim)]
        cols += ["r"]
        cols += [f"ns{i}" for i in range(self.state_dim)]
        if self.has_terminal:
            cols += ["d"]
        return cols


class TransitionDataset:
    """An immutable count x row_dim matrix of float32 transitions."""

    def __init__(self, schema: TransitionSchema, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float32)
        if rows.ndim == 1:
            rows = rows.reshape(0, schema.row_dim) if rows.size == 0 else rows.reshape(1, -1)
        if rows.ndim != 2 or rows.shape[1] != schema.row_dim:
            raise InvalidInputError(
                f"rows must be (count, {schema.row_dim}), got {rows.shape}"
            )
        if not np.all(np.isfinite(rows)):
            raise InvalidInputError("dataset contains non-finite values")
        if schema.has_terminal:
            d = rows[:, schema.terminal_index]
            if not np.all((d == 0.0) | (d == 1.0)):
                raise InvalidInputError("terminal entries must be 0 or 1")
        rows.setflags(write=False)
        self.schema = schema
        self.rows = rows

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    def __len__(self) -> int:
        return self.count

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TransitionDataset)
            and self.schema == other.schema
            and self.rows.shape == other.rows.shape
            and bool(np.all(self.rows == other.rows))
        )


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension affine map; terminal dimensions stay untouched."""

    mean: np.ndarray
    std: np.ndarray
    terminal_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        mask = self.terminal_mask
        mask = np.zeros(mean.shape, dtype=bool) if mask is None else np.asarray(mask, bool)
        if not (mean.shape == std.shape == mask.shape):
            raise InvalidInputError("mean/std/terminal_mask shapes differ")
        if np.any(std <= 0):
            raise InvalidInputError("std must be positive in every dimension")
        if np.any(mean[mask] != 0.0) or np.any(std[mask] != 1.0):
            raise InvalidInputError("terminal dims must be an identity transform")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "terminal_mask", mask)

    def apply(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows)
        if rows.shape[-1] != self.mean.shape[0]:
            raise InvalidInputError("row width does not match normalizer")
        return ((rows - self.mean) / self.std).astype(rows.dtype)

    def invert(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows)
        if rows.shape[-1] != self.mean.shape[0]:
            raise InvalidInputError("row width does not match normalizer")
        return (rows * self.std + self.mean).astype(rows.dtype)


def fit_normalizer(dataset: TransitionDataset) -> Normalizer:
    """Population mean/std per non-terminal dimension; guards constant dims."""
    if dataset.count < 2:
        raise InvalidInputError("need at least 2 rows to fit a normalizer")
    rows = dataset.rows.astype(np.float64)
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)  # population convention (divide by N)
    std = np.where(std < STD_FLOOR, 1.0, std)
    mask = dataset.schema.terminal_mask()
    mean[mask] = 0.0
    std[mask] = 1.0
    return Normalizer(mean=mean, std=std, terminal_mask=mask)


def normalize(dataset: TransitionDataset, normalizer: Normalizer) -> TransitionDataset:
    rows = normalizer.apply(dataset.rows.astype(np.float32))
    return TransitionDataset(dataset.schema, rows)


def denormalize(rows: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    return normalizer.invert(rows)


def threshold_terminals(rows: np.ndarray, schema: TransitionSchema) -> np.ndarray:
    """Round the terminal column to {0, 1}; ties at 0.5 go to 1."""
    if not schema.has_terminal:
        raise InvalidInputError("schema has no terminal column")
    out = np.array(rows, copy=True)
    d = out[..., schema.terminal_index]
    out[..., schema.terminal_index] = np.where(d >= 0.5, 1.0, 0.0)
    return out


def subsample(dataset: TransitionDataset, fraction: float, seed: int) -> TransitionDataset:
    """Uniform transition-level subsample without replacement."""
    if not (0.0 < fraction <= 1.0):
        raise InvalidInputError(f"fraction must be in (0, 1], got {fraction}")
    n = int(round(fraction * dataset.count))
    if n < 1:
        raise InvalidInputError("fraction selects fewer than one row")
    rng = np.random.default_rng(seed)
    idx = rng.choice(dataset.count, size=n, replace=False)
    return TransitionDataset(dataset.schema, dataset.rows[idx])


class ReplayBuffer:
    """Fixed-capacity ring buffer of rows; oldest rows evicted first."""

    def __init__(self, row_dim: int, capacity: int):
        if capacity <= 0 or row_dim <= 0:
            raise InvalidInputError("capacity and row_dim must be positive")
        self.capacity = capacity
        self._store = np.zeros((capacity, row_dim), dtype=np.float32)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, rows: np.ndarray) -> None:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float32))
        if rows.shape[1] != self._store.shape[1]:
            raise InvalidInputError("row width does not match buffer")
        n = rows.shape[0]
        if n >= self.capacity:
            self._store[:] = rows[-self.capacity:]
            self._next = 0
            self._size = self.capacity
            return
        end = self._next + n
        if end <= self.capacity:
            self._store[self._next:end] = rows
        else:
            split = self.capacity - self._next
            self._store[self._next:] = rows[:split]
            self._store[: end - self.capacity] = rows[split:]
        self._next = end % self.capacity
        self._size = min(self._size + n, self.capacity)

    def data(self) -> np.ndarray:
        """Current contents, oldest first."""
        if self._size < self.capacity:
            return self._store[: self._size].copy()
        return np.roll(self._store, -self._next, axis=0).copy()

    def sample(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise UnavailableDataError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return self._store[idx].copy()


@dataclass
class ReplayPair:
    """Real + synthetic ring buffers sampled jointly with real-data ratio r."""

    real: ReplayBuffer
    synthetic: ReplayBuffer
    ratio: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.ratio <= 1.0):
            raise InvalidInputError(f"ratio must be in [0, 1], got {self.ratio}")


def mixed_sample(pair: ReplayPair, batch_size: int, seed_or_rng) -> np.ndarray:
    """round(r*B) rows from the real buffer, the rest synthetic, shuffled."""
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    n_real = int(round(pair.ratio * batch_size))
    n_syn = batch_size - n_real
    if n_real > 0 and len(pair.real) == 0:
        raise UnavailableDataError("real buffer is empty but r > 0")
    if n_syn > 0 and len(pair.synthetic) == 0:
        raise UnavailableDataError("synthetic buffer is empty but r < 1")
    parts = []
    if n_real > 0:
        parts.append(pair.real.sample(n_real, rng))
    if n_syn > 0:
        parts.append(pair.synthetic.sample(n_syn, rng))
    batch = np.concatenate(parts, axis=0)
    rng.shuffle(batch, axis=0)
    return batch


# ---------------------------------------------------------------------------
# File formats


def save_dataset(dataset: TransitionDataset, path) -> None:
    """Binary format: magic, dims, terminal flag, count, then float32 rows."""
    header = MAGIC_DATASET + struct.pack(
        "<IIBQ",
        dataset.schema.state_dim,
        dataset.schema.action_dim,
        1 if dataset.schema.has_terminal else 0,
        dataset.count,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(dataset.rows, dtype="<f4").tobytes())


def load_dataset(path) -> TransitionDataset:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC_DATASET) + struct.calcsize("<IIBQ"):
        raise FormatError(f"truncated header at offset {len(blob)}")
    if blob[: len(MAGIC_DATASET)] != MAGIC_DATASET:
        raise FormatError("bad magic at offset 0")
    off = len(MAGIC_DATASET)
    state_dim, action_dim, has_terminal, count = struct.unpack_from("<IIBQ", blob, off)
    off += struct.calcsize("<IIBQ")
    schema = TransitionSchema(state_dim, action_dim, bool(has_terminal))
    expected = count * schema.row_dim * 4
    payload = blob[off:]
    if len(payload) != expected:
        raise FormatError(
            f"payload length {len(payload)} != expected {expected} at offset {off}"
        )
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, schema.row_dim)
    return TransitionDataset(schema, rows.copy())


def export_csv(dataset: TransitionDataset, path) -> None:
    header = ",".join(dataset.schema.csv_header())
    # repr of float32 prints the shortest decimal that roundtrips to 32 bits
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for row in dataset.rows:
            f.write(",".join(repr(float(np.float32(v))) for v in row) + "\n")


def import_csv(path) -> TransitionDataset:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        cols = header.split(",")
        schema = _schema_from_csv_header(cols)
        try:
            rows = np.loadtxt(f, delimiter=",", dtype=np.float32, ndmin=2)
        except ValueError as e:
            raise FormatError(f"bad CSV payload: {e}") from e
    if rows.size == 0:
        rows = np.zeros((0, schema.row_dim), dtype=np.float32)
    if rows.shape[1] != schema.row_dim:
        raise FormatError(
            f"CSV has {rows.shape[1]} columns, header implies {schema.row_dim}"
        )
    return TransitionDataset(schema, rows)


def _schema_from_csv_header(cols: list[str]) -> TransitionSchema:
    state_dim = sum(1 for c in cols if c.startswith("s") and c[1:].isdigit())
    action_dim = sum(1 for c in cols if c.startswith("a") and c[1:].isdigit())
    has_terminal = cols[-1] == "d"
    if state_dim == 0 or action_dim == 0 or "r" not in cols:
        raise FormatError(f"unrecognized CSV header: {','.join(cols)}")
    schema = TransitionSchema(state_dim, action_dim, has_terminal)
    if cols != schema.csv_header():
        raise FormatError("CSV header order must be [s..., a..., r, ns..., d]")
    return schema
