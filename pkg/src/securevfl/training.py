"""Secure LR/KLR training over the tracked backend, plaintext baselines, evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from securevfl.approx import (
    DEFAULT_INTERVAL,
    DEFAULT_POINTS,
    KernelMatrix,
    KernelSpec,
    Sigmoid,
    SigmoidPoly,
    fit_sigmoid_poly,
    gram_matrix,
    klr_gradient,
    lr_gradient,
)
from securevfl.dataset import Dataset, VerticalSplit
from securevfl.errors import ConfigError, InvalidInputError, OperandMismatchError
from securevfl.he_backend import TrackedBackend, TrackedCiphertext
from securevfl.ledger import CostLedger, min_budget
from securevfl.protocol import (
    Federation,
    PartyId,
    ProtocolTranscript,
    exchange_features,
    exchange_kernel,
)

SCHEMA_VERSION = 1
MODEL_KINDS = ("lr", "klr")
SECURE_KERNELS = ("linear", "polynomial", "rbf_taylor2")
MAX_SIGMOID_DEGREE = 7

Callback = Callable[[int, np.ndarray, np.ndarray], None]


@lru_cache(maxsize=None)
def cached_sigmoid(degree: int, interval: tuple[float, float] = DEFAULT_INTERVAL,
                   num_points: int = DEFAULT_POINTS) -> SigmoidPoly:
    return fit_sigmoid_poly(degree, interval, num_points)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    iterations: int = 20
    sigmoid_degree: int = 3
    lambda_reg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not 1 <= self.sigmoid_degree <= MAX_SIGMOID_DEGREE:
            raise ConfigError(f"sigmoid_degree must lie in 1..{MAX_SIGMOID_DEGREE}")
        if self.lambda_reg < 0:
            raise ConfigError("lambda_reg must be non-negative")

    def sigmoid(self) -> SigmoidPoly:
        return cached_sigmoid(self.sigmoid_degree)

    def to_dict(self) -> dict:
        return asdict(self)


def _sigmoid_to_json(s: Sigmoid):
    return s.to_dict() if isinstance(s, SigmoidPoly) else s


def _sigmoid_from_json(d) -> Sigmoid:
    return SigmoidPoly.from_dict(d) if isinstance(d, dict) else d


@dataclass(eq=False)
class Model:
    kind: str
    weights: np.ndarray
    kernel: KernelSpec | None = None
    sigmoid: Sigmoid = "exact"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if (self.kind == "klr") != (self.kernel is not None):
            raise ConfigError("a kernel spec is required for klr and forbidden for lr")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise InvalidInputError("model weights must be a vector")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "kernel": self.kernel.to_dict() if self.kernel else None,
            "sigmoid": _sigmoid_to_json(self.sigmoid),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Model:
        return cls(
            kind=d["kind"],
            weights=np.asarray(d["weights"], dtype=np.float64),
            kernel=KernelSpec.from_dict(d["kernel"]) if d.get("kernel") else None,
            sigmoid=_sigmoid_from_json(d.get("sigmoid", "exact")),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Model:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(eq=False)
class TrainReport:
    final_model: Model
    grad_norms: list[float]
    weight_history: list[np.ndarray]
    ledger: CostLedger
    max_depth_reached: int
    wall_time: float
    secure: bool
    config: TrainConfig
    budget: int | None = None
    accuracy: float | None = None
    holdout_accuracy: float | None = None
    dataset: dict = field(default_factory=dict)
    transcript: ProtocolTranscript | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "secure": self.secure,
            "model": self.final_model.to_dict(),
            "config": self.config.to_dict(),
            "budget": self.budget,
            "accuracy": self.accuracy,
            "holdout_accuracy": self.holdout_accuracy,
            "grad_norms": list(self.grad_norms),
            "weight_history": [w.tolist() for w in self.weight_history],
            "ledger": self.ledger.to_dict(),
            "max_depth_reached": self.max_depth_reached,
            "dataset": self.dataset,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> TrainReport:
        return cls(
            final_model=Model.from_dict(d["model"]),
            grad_norms=list(d["grad_norms"]),
            weight_history=[np.asarray(w) for w in d.get("weight_history", [])],
            ledger=CostLedger.from_dict(d["ledger"]),
            max_depth_reached=int(d["max_depth_reached"]),
            wall_time=float(d["wall_time"]),
            secure=bool(d["secure"]),
            config=TrainConfig(**d["config"]),
            budget=d.get("budget"),
            accuracy=d.get("accuracy"),
            holdout_accuracy=d.get("holdout_accuracy"),
            dataset=d.get("dataset", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> TrainReport:
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- plaintext baselines -------------------------------------------------------

def _descend(grad: Callable[[np.ndarray], np.ndarray], dim: int, cfg: TrainConfig,
             callback: Callback | None) -> np.ndarray:
    w = np.zeros(dim)
    for it in range(cfg.iterations):
        g = grad(w)
        w = w - cfg.learning_rate * g
        if callback is not None:
            callback(it, w.copy(), g)
    return w


def plaintext_train_lr(data: Dataset, cfg: TrainConfig, sigma: Sigmoid = "exact",
                       callback: Callback | None = None) -> Model:
    """Full-batch gradient descent from w = 0; no regularization."""
    w = _descend(lambda w: lr_gradient(w, data.X, data.y, sigma), data.d, cfg, callback)
    return Model("lr", w, None, sigma)


def plaintext_train_klr(data: Dataset, cfg: TrainConfig, kernel: KernelSpec,
                        sigma: Sigmoid = "exact", K: KernelMatrix | None = None,
                        callback: Callback | None = None) -> Model:
    """Gradient descent on beta from 0 with ``cfg.lambda_reg`` regularization."""
    K = gram_matrix(kernel, data.X) if K is None else K
    beta = _descend(lambda b: klr_gradient(b, K, data.y, sigma, cfg.lambda_reg),
                    data.n, cfg, callback)
    return Model("klr", beta, kernel, sigma)


# --- secure protocol ---------------------------------------------------------------

def gradient_aggregate(be: TrackedBackend, model_ct: TrackedCiphertext,
                       vectors: list[TrackedCiphertext], y: np.ndarray,
                       poly: SigmoidPoly) -> TrackedCiphertext:
    """Bob's encrypted gradient [T] = sum_i sum_k alpha_k [t_i^k][v_i].

    alpha_k = a_k (-y_i)^(k+1) / N, so that with t_i = w.v_i the sum equals
    (1/N) sum_i sigma_poly(-y_i t_i) (-y_i) v_i.
    """
    n = len(vectors)
    a = poly.coefficients
    acc = None
    for v, yi in zip(vectors, y):
        t = be.dot(model_ct, v)
        powers = be.power_tree(t, poly.degree)
        term = be.mul_plain(v, a[0] * (-yi) / n)
        acc = term if acc is None else be.add(acc, term)
        for k in range(1, poly.degree + 1):
            scaled = be.mul_plain(powers[k - 1], a[k] * (-yi) ** (k + 1) / n)
            acc = be.add(acc, be.mul(scaled, v))
    return acc


def _secure_loop(fed: Federation, vectors: list[TrackedCiphertext], dim: int,
                 cfg: TrainConfig) -> tuple[np.ndarray, list[np.ndarray], list[float]]:
    be, ch = fed.backend, fed.channel
    poly = cfg.sigmoid()
    w = np.zeros(dim)
    history, norms = [], []
    for it in range(cfg.iterations):
        with be.scope(f"iteration[{it}]"):
            ch.send(PartyId.EVE, PartyId.BOB, "encrypted_model", {"model": fed.eve.encrypt(w)})
            model_ct = ch.receive(PartyId.BOB, "encrypted_model")["model"]
            T = gradient_aggregate(be, model_ct, vectors, fed.bob.y, poly)
            ch.send(PartyId.BOB, PartyId.EVE, "gradient",
                    {"T": T, "learning_rate": cfg.learning_rate})
            msg = ch.receive(PartyId.EVE, "gradient")
            g = fed.eve.decrypt(msg["T"])
            w = w - msg["learning_rate"] * g
        history.append(w.copy())
        norms.append(float(np.linalg.norm(g)))
    return w, history, norms


def _report(fed: Federation, model: Model, history, norms, cfg, budget, t0,
            name: str) -> TrainReport:
    led = fed.backend.ledger.copy()
    return TrainReport(
        final_model=model,
        grad_norms=norms,
        weight_history=history,
        ledger=led,
        max_depth_reached=led.max_depth,
        wall_time=time.perf_counter() - t0,
        secure=True,
        config=cfg,
        budget=budget,
        transcript=ProtocolTranscript(name, list(fed.channel.messages), led),
    )


def secure_train_lr(split: VerticalSplit, cfg: TrainConfig, budget: int | None = None) -> TrainReport:
    """Secure LR: feature exchange, then Bob-side encrypted gradients, Eve-side updates."""
    if budget is None:
        budget = min_budget("lr", cfg.sigmoid_degree)
    t0 = time.perf_counter()
    fed = Federation.create(split, budget)
    rows = exchange_features(fed).rows
    w, history, norms = _secure_loop(fed, rows, split.d, cfg)
    model = Model("lr", w, None, cfg.sigmoid())
    return _report(fed, model, history, norms, cfg, budget, t0, "secure_lr")


def secure_train_klr(split: VerticalSplit, cfg: TrainConfig, kernel: KernelSpec,
                     budget: int | None = None) -> TrainReport:
    """Secure KLR over an encrypted Gram matrix; no regularization term."""
    if kernel.kind not in SECURE_KERNELS:
        raise ConfigError(f"kernel {kernel.kind!r} has no secure protocol; use one of {SECURE_KERNELS}")
    if cfg.lambda_reg:
        raise ConfigError("secure KLR has no regularization term; set lambda_reg to 0")
    if budget is None:
        budget = min_budget("klr", cfg.sigmoid_degree, kernel.kind, kernel.d_poly or 1)
    t0 = time.perf_counter()
    fed = Federation.create(split, budget)
    rows = exchange_kernel(fed, kernel).rows
    beta, history, norms = _secure_loop(fed, rows, split.n, cfg)
    model = Model("klr", beta, kernel, cfg.sigmoid())
    return _report(fed, model, history, norms, cfg, budget, t0, "secure_klr")


def plaintext_report(data: Dataset, cfg: TrainConfig, kind: str, kernel: KernelSpec | None = None,
                     sigma: Sigmoid = "exact") -> TrainReport:
    """Plaintext run wrapped in the same report shape as a secure run."""
    t0 = time.perf_counter()
    history, norms = [], []

    def track(_, w, g):
        history.append(w)
        norms.append(float(np.linalg.norm(g)))

    K = None
    if kind == "lr":
        model = plaintext_train_lr(data, cfg, sigma, track)
    elif kind == "klr":
        if kernel is None:
            raise ConfigError("klr needs a kernel")
        K = gram_matrix(kernel, data.X)
        model = plaintext_train_klr(data, cfg, kernel, sigma, K, track)
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    return TrainReport(
        final_model=model,
        grad_norms=norms,
        weight_history=history,
        ledger=CostLedger(scope_tag="plaintext"),
        max_depth_reached=0,
        wall_time=time.perf_counter() - t0,
        secure=False,
        config=cfg,
        accuracy=evaluate(model, data, K),
        dataset=dict(data.meta),
    )


# --- evaluation --------------------------------------------------------------------

def decision_values(model: Model, data: Dataset, K: KernelMatrix | np.ndarray | None = None) -> np.ndarray:
    if model.kind == "lr":
        if data.d != model.weights.size:
            raise OperandMismatchError(f"model has {model.weights.size} weights, data has {data.d} columns")
        return data.X @ model.weights
    if K is None:
        raise InvalidInputError("KLR evaluation needs the kernel of training points against evaluation points")
    K = K.entries if isinstance(K, KernelMatrix) else np.asarray(K, dtype=np.float64)
    if K.shape != (model.weights.size, data.n):
        raise OperandMismatchError(
            f"kernel block {K.shape} does not match {model.weights.size} training x {data.n} evaluation points"
        )
    return K.T @ model.weights


def predict(model: Model, data: Dataset, K=None) -> np.ndarray:
    """Labels in {-1, +1}; an exact zero margin predicts +1."""
    return np.where(decision_values(model, data, K) >= 0, 1.0, -1.0)


def evaluate(model: Model, data: Dataset, K=None) -> float:
    return float(np.mean(predict(model, data, K) == data.y))
