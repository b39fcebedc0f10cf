"""Synthetic generators, CSV I/O, standardization and the vertical feature split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from securevfl.approx import check_labels
from securevfl.errors import InvalidInputError

SCHEMA_VERSION = 1
LABEL_COLUMN = "label"


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] < 1 or self.X.shape[1] < 1:
            raise InvalidInputError(f"feature matrix must be N x D with N, D >= 1; got {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise InvalidInputError("label vector length does not match the number of rows")
        check_labels(self.y)
        if len(self.feature_names) != self.X.shape[1]:
            raise InvalidInputError("one feature name per column is required")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.feature_names, dict(self.meta))

    def class_balance(self) -> dict[int, int]:
        return {-1: int(np.sum(self.y < 0)), 1: int(np.sum(self.y > 0))}


@dataclass(frozen=True, eq=False)
class VerticalSplit:
    alice_X: np.ndarray
    bob_X: np.ndarray
    bob_y: np.ndarray
    alice_features: tuple[str, ...] = ()
    bob_features: tuple[str, ...] = ()

    def __post_init__(self):
        if self.alice_X.shape[0] != self.bob_X.shape[0] or self.bob_y.size != self.bob_X.shape[0]:
            raise InvalidInputError("Alice's and Bob's shares are not row-aligned")

    @property
    def n(self) -> int:
        return self.bob_X.shape[0]

    @property
    def d(self) -> int:
        return self.alice_X.shape[1] + self.bob_X.shape[1]

    def joined(self) -> Dataset:
        """Reassemble [alice | bob]; only meaningful outside the protocol, for oracles."""
        names = self.alice_features + self.bob_features
        if len(names) != self.d:
            names = tuple(f"x{i + 1}" for i in range(self.d))
        return Dataset(np.hstack([self.alice_X, self.bob_X]), self.bob_y.copy(), names)


# --- random source -------------------------------------------------------------

def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def gaussian(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normal draws by Box-Muller on the generator's uniform stream."""
    size = int(np.prod(shape))
    m = (size + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1]
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:size].reshape(shape)


def _check_even(n: int) -> None:
    if n < 2 or n % 2:
        raise InvalidInputError(f"n must be a positive even integer, got {n}")


def make_circles(n: int = 500, noise: float = 0.05, factor: float = 0.3, seed: int = 0) -> Dataset:
    """Two concentric rings: outer radius 1 (label -1), inner radius ``factor`` (+1)."""
    _check_even(n)
    if not 0 < factor < 1:
        raise InvalidInputError("factor must lie in (0, 1)")
    if noise < 0:
        raise InvalidInputError("noise must be non-negative")
    h = n // 2
    t = np.linspace(0.0, 2 * np.pi, h, endpoint=False)
    ring = np.column_stack([np.cos(t), np.sin(t)])
    X = np.vstack([ring, factor * ring])
    y = np.concatenate([-np.ones(h), np.ones(h)])
    rng = _rng(seed)
    if noise > 0:
        X = X + noise * gaussian(rng, X.shape)
    perm = rng.permutation(n)
    meta = {"generator": "circles", "n": n, "noise": noise, "factor": factor, "seed": seed}
    return Dataset(X[perm], y[perm], ("x1", "x2"), meta)


def make_moons(n: int = 500, noise: float = 0.05, seed: int = 0) -> Dataset:
    """Two interleaving half circles; upper arc -1, lower arc +1."""
    _check_even(n)
    if noise < 0:
        raise InvalidInputError("noise must be non-negative")
    h = n // 2
    t = np.linspace(0.0, np.pi, h)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    X = np.vstack([upper, lower])
    y = np.concatenate([-np.ones(h), np.ones(h)])
    rng = _rng(seed)
    if noise > 0:
        X = X + noise * gaussian(rng, X.shape)
    perm = rng.permutation(n)
    meta = {"generator": "moons", "n": n, "noise": noise, "seed": seed}
    return Dataset(X[perm], y[perm], ("x1", "x2"), meta)


GENERATORS = {"circles": make_circles, "moons": make_moons}


def subsample(data: Dataset, n: int, seed: int = 0) -> Dataset:
    """Deterministic random subset of ``n`` rows, original order kept."""
    if not 1 <= n <= data.n:
        raise InvalidInputError(f"cannot take {n} of {data.n} rows")
    idx = np.sort(_rng(seed).choice(data.n, size=n, replace=False))
    out = data.subset(idx)
    out.meta["subsample"] = {"n": n, "seed": seed}
    return out


def holdout_split(data: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Deterministic (train, test) partition with ``fraction`` of rows held out."""
    if not 0 < fraction < 1:
        raise InvalidInputError(f"holdout fraction must lie in (0, 1), got {fraction}")
    n_test = int(round(fraction * data.n))
    if not 1 <= n_test < data.n:
        raise InvalidInputError(f"holdout of {fraction} leaves no rows on one side of {data.n}")
    perm = _rng(seed).permutation(data.n)
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))


# --- preprocessing ---------------------------------------------------------------

def standardize_columns(X: np.ndarray) -> np.ndarray:
    """Zero mean, unit population stdev; constant columns become zero."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    out = X - mu
    nz = sd > 0
    out[:, nz] /= sd[nz]
    out[:, ~nz] = 0.0
    return out


def standardize(d: Dataset) -> Dataset:
    if d.n < 2:
        raise InvalidInputError("standardization needs at least two rows")
    meta = dict(d.meta, standardized=True)
    return Dataset(standardize_columns(d.X), d.y.copy(), d.feature_names, meta)


def vertical_split(d: Dataset, d_A: int = 1) -> VerticalSplit:
    """First ``d_A`` columns to Alice; the rest plus labels to Bob."""
    if not 1 <= d_A < d.d:
        raise InvalidInputError(f"d_A must lie in [1, {d.d - 1}], got {d_A}")
    return VerticalSplit(
        alice_X=d.X[:, :d_A].copy(),
        bob_X=d.X[:, d_A:].copy(),
        bob_y=d.y.copy(),
        alice_features=tuple(d.feature_names[:d_A]),
        bob_features=tuple(d.feature_names[d_A:]),
    )


def standardize_split(s: VerticalSplit) -> VerticalSplit:
    """Each party standardizes its own columns; nothing crosses party lines."""
    return VerticalSplit(
        standardize_columns(s.alice_X),
        standardize_columns(s.bob_X),
        s.bob_y.copy(),
        s.alice_features,
        s.bob_features,
    )


# --- CSV ---------------------------------------------------------------------------

def _meta_line(meta: dict) -> str:
    parts = [f"schema_version={SCHEMA_VERSION}"]
    parts += [f"{k}={v}" for k, v in meta.items() if not isinstance(v, dict)]
    return "# " + " ".join(parts)


def _parse_meta(line: str) -> dict:
    meta = {}
    for tok in line.lstrip("#").split():
        if "=" not in tok:
            continue
        k, v = tok.split("=", 1)
        for conv in (int, float):
            try:
                v = conv(v)
                break
            except ValueError:
                pass
        meta[k] = v
    return meta


def save_csv(d: Dataset, path: str | Path) -> None:
    """Features plus a ``label`` column in {-1, +1}; a leading comment holds metadata."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(_meta_line(d.meta) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.feature_names, LABEL_COLUMN])
        for row, label in zip(d.X, d.y):
            w.writerow([repr(float(v)) for v in row] + [str(int(label))])


def load_csv(path: str | Path, label_column: str = LABEL_COLUMN,
             positive_label: str = "1") -> Dataset:
    """Read a header-row CSV; ``positive_label`` maps to +1, every other label to -1.

    Lines starting with ``#`` before the header are metadata comments.
    """
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"no such file: {path}")
    meta: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body_start = 0
    while body_start < len(lines) and lines[body_start].startswith("#"):
        meta.update(_parse_meta(lines[body_start]))
        body_start += 1
    reader = csv.reader(lines[body_start:])
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InvalidInputError(f"{path}: missing header row") from None
    if label_column not in header:
        raise InvalidInputError(f"{path}: label column {label_column!r} not found in header")
    li = header.index(label_column)
    names = tuple(h for j, h in enumerate(header) if j != li)
    if not names:
        raise InvalidInputError(f"{path}: no feature columns")
    rows, labels = [], []
    for r, rec in enumerate(reader, start=body_start + 2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise InvalidInputError(f"{path}: line {r} has {len(rec)} cells, expected {len(header)}")
        vals = []
        for j, cell in enumerate(rec):
            if j == li:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise InvalidInputError(
                    f"{path}: line {r}, column {header[j]!r}: non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise InvalidInputError(f"{path}: line {r}, column {header[j]!r}: non-finite value")
            vals.append(v)
        rows.append(vals)
        labels.append(1.0 if rec[li].strip() == positive_label else -1.0)
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    y = np.asarray(labels)
    meta.pop("schema_version", None)
    meta.setdefault("source", str(path))
    return Dataset(np.asarray(rows, dtype=np.float64), y, names, meta)
