"""Plaintext math: sigmoid and its polynomial surrogate, kernels, LR/KLR gradients.

These functions serve twice: they provide coefficients and kernel definitions
to the secure protocols, and they are the plaintext oracles the secure runs
are checked against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Union

import numpy as np

from securevfl.errors import FitError, InvalidInputError, InvalidLabelError, OperandMismatchError

SCHEMA_VERSION = 1

DEFAULT_INTERVAL = (-8.0, 8.0)
DEFAULT_POINTS = 1024


def sigmoid_exact(s):
    """Logistic function, numerically stable for large |s|."""
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SigmoidPoly:
    degree: int
    coefficients: tuple[float, ...]
    fit_interval: tuple[float, float] = DEFAULT_INTERVAL
    fit_points: int = DEFAULT_POINTS
    residual_rms: float = float("nan")

    def __post_init__(self):
        if len(self.coefficients) != self.degree + 1:
            raise InvalidInputError(
                f"degree {self.degree} needs {self.degree + 1} coefficients, "
                f"got {len(self.coefficients)}"
            )

    def __call__(self, s):
        return eval_poly(self, s)

    def max_deviation(self, num: int = 4001) -> float:
        s = np.linspace(*self.fit_interval, num)
        return float(np.max(np.abs(eval_poly(self, s) - sigmoid_exact(s))))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "degree": self.degree,
            "coefficients": list(self.coefficients),
            "fit_interval": list(self.fit_interval),
            "fit_points": self.fit_points,
            "residual_rms": self.residual_rms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SigmoidPoly:
        return cls(
            degree=int(d["degree"]),
            coefficients=tuple(float(c) for c in d["coefficients"]),
            fit_interval=tuple(d.get("fit_interval", DEFAULT_INTERVAL)),
            fit_points=int(d.get("fit_points", DEFAULT_POINTS)),
            residual_rms=float(d.get("residual_rms", float("nan"))),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> SigmoidPoly:
        return cls.from_dict(json.loads(Path(path).read_text()))


Sigmoid = Union[SigmoidPoly, Literal["exact"]]


def fit_sigmoid_poly(degree: int, interval: tuple[float, float] = DEFAULT_INTERVAL,
                     num_points: int = DEFAULT_POINTS) -> SigmoidPoly:
    """Unweighted least-squares polynomial fit of the logistic function.

    Samples are equally spaced over ``interval``. The fit is solved in the
    variable s / max|interval| and mapped back, which keeps the Vandermonde
    system well conditioned up to degree 7 and beyond.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if degree < 1:
        raise InvalidInputError("sigmoid polynomial degree must be >= 1")
    if not hi > lo:
        raise InvalidInputError(f"degenerate fit interval [{lo}, {hi}]")
    if num_points < degree + 1:
        raise FitError(f"{num_points} points cannot determine a degree-{degree} fit")
    s = np.linspace(lo, hi, num_points)
    scale = max(abs(lo), abs(hi))
    A = np.vander(s / scale, degree + 1, increasing=True)
    target = sigmoid_exact(s)
    coef, _, rank, _ = np.linalg.lstsq(A, target, rcond=None)
    if rank < degree + 1:
        raise FitError(f"rank-deficient fit (rank {rank} < {degree + 1})")
    coef = coef / scale ** np.arange(degree + 1)
    resid = A @ (coef * scale ** np.arange(degree + 1)) - target
    return SigmoidPoly(
        degree=degree,
        coefficients=tuple(float(c) for c in coef),
        fit_interval=(lo, hi),
        fit_points=num_points,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )


def eval_poly(p: SigmoidPoly, s):
    s = np.asarray(s, dtype=np.float64)
    acc = np.zeros_like(s)
    for a in reversed(p.coefficients):
        acc = acc * s + a
    return acc if acc.ndim else float(acc)


def _sigma(sigma: Sigmoid):
    if isinstance(sigma, SigmoidPoly):
        return sigma
    if sigma == "exact":
        return sigmoid_exact
    raise InvalidInputError(f"unknown sigmoid {sigma!r}")


# --- kernels -----------------------------------------------------------------

KERNEL_KINDS = ("linear", "polynomial", "rbf_exact", "rbf_taylor2")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    c: float | None = None
    d_poly: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidInputError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial":
            if self.c is None or self.d_poly is None:
                raise InvalidInputError("polynomial kernel needs c and d_poly")
            if self.d_poly < 1:
                raise InvalidInputError("d_poly must be >= 1")
        elif self.c is not None or self.d_poly is not None:
            raise InvalidInputError(f"{self.kind} kernel takes no c/d_poly")
        if self.kind.startswith("rbf"):
            if self.gamma is None or not self.gamma > 0:
                raise InvalidInputError("rbf kernels need gamma > 0")
        elif self.gamma is not None:
            raise InvalidInputError(f"{self.kind} kernel takes no gamma")

    @classmethod
    def linear(cls) -> KernelSpec:
        return cls("linear")

    @classmethod
    def polynomial(cls, c: float = 1.0, d_poly: int = 3) -> KernelSpec:
        return cls("polynomial", c=float(c), d_poly=int(d_poly))

    @classmethod
    def rbf(cls, gamma: float = 1.0, taylor: bool = False) -> KernelSpec:
        return cls("rbf_taylor2" if taylor else "rbf_exact", gamma=float(gamma))

    @property
    def label(self) -> str:
        if self.kind == "polynomial":
            return f"poly-{self.d_poly}"
        return {"linear": "linear", "rbf_exact": "rbf", "rbf_taylor2": "taylor2-rbf"}[self.kind]

    def to_dict(self) -> dict:
        return {k: v for k, v in
                {"kind": self.kind, "c": self.c, "d_poly": self.d_poly, "gamma": self.gamma}.items()
                if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> KernelSpec:
        return cls(d["kind"], c=d.get("c"), d_poly=d.get("d_poly"), gamma=d.get("gamma"))


def _from_sq_dist(spec: KernelSpec, sq):
    u = -spec.gamma * sq
    if spec.kind == "rbf_exact":
        return np.exp(u)
    return 1.0 + u + u * u / 2.0


def kernel_entry(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise OperandMismatchError(f"kernel arguments of shape {x.shape} and {y.shape}")
    if spec.kind == "linear":
        return float(np.sum(x * y))
    if spec.kind == "polynomial":
        return float((np.sum(x * y) + spec.c) ** spec.d_poly)
    return float(_from_sq_dist(spec, np.sum((x - y) ** 2)))


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    entries: np.ndarray
    spec: KernelSpec
    provenance: str = "plaintext"

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def column(self, i: int) -> np.ndarray:
        return self.entries[:, i]


def pairwise_inner(X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
    """Entrywise-independent inner products; exactly symmetric when Y is X."""
    Y = X if Y is None else Y
    return np.einsum("ik,jk->ijk", X, Y).sum(axis=-1)


def pairwise_sq_dist(X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
    Y = X if Y is None else Y
    return ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=-1)


def cross_kernel(spec: KernelSpec, X, Y) -> np.ndarray:
    """K[i, j] = kernel(X[i], Y[j])."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise OperandMismatchError(f"feature dims {X.shape[1]} and {Y.shape[1]} differ")
    if spec.kind == "linear":
        return pairwise_inner(X, Y)
    if spec.kind == "polynomial":
        return (pairwise_inner(X, Y) + spec.c) ** spec.d_poly
    return _from_sq_dist(spec, pairwise_sq_dist(X, Y))


def gram_matrix(spec: KernelSpec, data) -> KernelMatrix:
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if X.shape[0] < 1:
        raise InvalidInputError("gram matrix needs at least one row")
    return KernelMatrix(cross_kernel(spec, X, X), spec, "plaintext")


# --- objectives and gradients --------------------------------------------------

def check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    bad = ~np.isin(y, (-1.0, 1.0))
    if bad.any():
        raise InvalidLabelError(f"labels must be -1/+1; found {y[bad][0]!r}")
    return y


def lr_loss(w, X, y) -> float:
    """Mean logistic loss of a linear model."""
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y)
    return float(np.mean(np.logaddexp(0.0, -y * (X @ w))))


def lr_gradient(w, X, y, sigma: Sigmoid = "exact") -> np.ndarray:
    """(1/N) sum_n sigma(-y_n w.x_n) (-y_n x_n), sigma exact or polynomial."""
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    y = check_labels(y)
    if X.ndim != 2 or X.shape[0] != y.size or X.shape[1] != w.size:
        raise OperandMismatchError(f"X {X.shape}, w {w.shape}, y {y.shape} are inconsistent")
    s = _sigma(sigma)(-y * (X @ w))
    return (s * -y) @ X / y.size


def _kmat(K) -> np.ndarray:
    return K.entries if isinstance(K, KernelMatrix) else np.asarray(K, dtype=np.float64)


def klr_loss(beta, K, y, lambda_reg: float = 0.0) -> float:
    K = _kmat(K)
    y = check_labels(y)
    n = y.size
    margins = K.T @ beta  # margin n is beta . K(:, n)
    return float(lambda_reg / n * beta @ K @ beta + np.mean(np.logaddexp(0.0, -y * margins)))


def klr_gradient(beta, K, y, sigma: Sigmoid = "exact", lambda_reg: float = 0.0) -> np.ndarray:
    K = _kmat(K)
    beta = np.asarray(beta, dtype=np.float64)
    y = check_labels(y)
    n = y.size
    if K.shape != (n, n) or beta.size != n:
        raise OperandMismatchError(f"K {K.shape}, beta {beta.shape}, y {y.shape} are inconsistent")
    s = _sigma(sigma)(-y * (K.T @ beta))
    return lambda_reg / n * ((K + K.T) @ beta) + K @ (s * -y) / n


__all__ = [
    "sigmoid_exact",
    "SigmoidPoly",
    "fit_sigmoid_poly",
    "eval_poly",
    "KernelSpec",
    "KernelMatrix",
    "kernel_entry",
    "gram_matrix",
    "cross_kernel",
    "lr_loss",
    "lr_gradient",
    "klr_loss",
    "klr_gradient",
    "check_labels",
]
