"""Homomorphic operation accounting and checks against the published cost tables."""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from typing import Iterable

from securevfl.errors import ConfigError

COUNTERS = ("adds", "ct_ct_mults", "ct_pt_mults", "rotations")


@dataclass
class CostLedger:
    adds: int = 0
    ct_ct_mults: int = 0
    ct_pt_mults: int = 0
    rotations: int = 0
    max_depth: int = 0
    scope_tag: str = ""

    @property
    def mults(self) -> int:
        return self.ct_ct_mults + self.ct_pt_mults

    def counts(self) -> tuple[int, int]:
        """(additions, multiplications) in the layout of the per-entry cost table."""
        return self.adds, self.mults

    def copy(self) -> CostLedger:
        return CostLedger(**asdict(self))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mults"] = self.mults
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CostLedger:
        return cls(**{k: d[k] for k in (*COUNTERS, "max_depth", "scope_tag") if k in d})


def merge(ledgers: Iterable[CostLedger], scope_tag: str = "merged") -> CostLedger:
    out = CostLedger(scope_tag=scope_tag)
    for led in ledgers:
        for name in COUNTERS:
            setattr(out, name, getattr(out, name) + getattr(led, name))
        out.max_depth = max(out.max_depth, led.max_depth)
    return out


class LedgerRecorder:
    """Serialized recording into a stack of scoped ledgers.

    Every op lands in the innermost open scope; closing a scope folds it into
    its parent, so the root ledger always holds run totals.
    """

    def __init__(self, scope_tag: str = "run"):
        self._lock = threading.Lock()
        self._stack: list[CostLedger] = [CostLedger(scope_tag=scope_tag)]

    @property
    def root(self) -> CostLedger:
        return self._stack[0]

    @property
    def current(self) -> CostLedger:
        return self._stack[-1]

    def record(self, counter: str, depth: int) -> None:
        with self._lock:
            led = self._stack[-1]
            setattr(led, counter, getattr(led, counter) + 1)
            if depth > led.max_depth:
                led.max_depth = depth

    def touch_depth(self, depth: int) -> None:
        with self._lock:
            led = self._stack[-1]
            if depth > led.max_depth:
                led.max_depth = depth

    def push(self, scope_tag: str) -> CostLedger:
        with self._lock:
            child = CostLedger(scope_tag=scope_tag)
            self._stack.append(child)
            return child

    def pop(self) -> CostLedger:
        with self._lock:
            if len(self._stack) == 1:
                raise RuntimeError("cannot close the root ledger scope")
            child = self._stack.pop()
            parent = self._stack[-1]
            for name in COUNTERS:
                setattr(parent, name, getattr(parent, name) + getattr(child, name))
            parent.max_depth = max(parent.max_depth, child.max_depth)
            return child


# --- published per-entry costs (additions, multiplications) ------------------

PROTOCOLS = ("data_exchange", "linear_kernel", "poly_kernel", "rbf_kernel")


@dataclass(frozen=True)
class LedgerExpectation:
    protocol: str
    adds: int
    mults: int


def table1_expectation(protocol: str, d_poly: int | None = None) -> LedgerExpectation:
    if protocol == "data_exchange":
        return LedgerExpectation(protocol, 0, 0)
    if protocol == "linear_kernel":
        return LedgerExpectation(protocol, 1, 0)
    if protocol == "poly_kernel":
        if d_poly is None or d_poly < 1:
            raise ConfigError("poly_kernel expectation needs d_poly >= 1")
        return LedgerExpectation(protocol, 2, d_poly - 1)
    if protocol == "rbf_kernel":
        return LedgerExpectation(protocol, 4, 1)
    raise ConfigError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")


@dataclass
class Table1Check:
    protocol: str
    params: dict
    expected: tuple[int, int]
    measured: tuple[int, int]

    @property
    def passed(self) -> bool:
        return self.expected == self.measured

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "params": self.params,
            "expected": list(self.expected),
            "measured": list(self.measured),
            "passed": self.passed,
        }


def verify_table1(ledger: CostLedger, protocol: str, d_poly: int | None = None) -> Table1Check:
    """Compare a ledger scoped to one kernel entry with the published cost row."""
    exp = table1_expectation(protocol, d_poly)
    params = {"d_poly": d_poly} if protocol == "poly_kernel" else {}
    return Table1Check(protocol, params, (exp.adds, exp.mults), ledger.counts())


# --- multiplicative depth ----------------------------------------------------

# Published totals for sigmoid degrees 1..5; the polynomial-kernel row is an
# offset added to d_poly.
TABLE2 = {
    "lr": (3, 4, 5, 5, 6),
    "linear": (4, 5, 6, 6, 7),
    "polynomial": (2, 3, 4, 4, 5),
    "rbf_taylor2": (5, 6, 7, 7, 8),
}

KERNEL_DEPTH_KINDS = ("linear", "polynomial", "rbf_taylor2")


def kernel_entry_depth(kind: str, d_poly: int = 1) -> int:
    if kind == "linear":
        return 0
    if kind == "polynomial":
        return d_poly - 1
    if kind == "rbf_taylor2":
        return 1
    raise ConfigError(f"no secure exchange protocol for kernel kind {kind!r}")


def ceil_log2(k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    return (k - 1).bit_length()


def training_depth(model_kind: str, sigmoid_degree: int, kernel_kind: str | None = None,
                   d_poly: int = 1) -> int:
    """Depth consumed by one gradient round: dot product, power tree, two scalings."""
    base = 3 + ceil_log2(sigmoid_degree)
    if model_kind == "lr":
        return base
    if model_kind == "klr":
        if kernel_kind is None:
            raise ConfigError("klr depth needs a kernel kind")
        return kernel_entry_depth(kernel_kind, d_poly) + base
    raise ConfigError(f"unknown model kind {model_kind!r}")


def table2_value(model_kind: str, sigmoid_degree: int, kernel_kind: str | None = None,
                 d_poly: int = 1) -> int | None:
    """Published depth, or None when the degree lies outside the tabulated 1..5."""
    if model_kind == "lr":
        row = TABLE2["lr"]
    elif model_kind == "klr" and kernel_kind in KERNEL_DEPTH_KINDS:
        row = TABLE2[kernel_kind]
    else:
        raise ConfigError(f"no published depth for model={model_kind!r} kernel={kernel_kind!r}")
    if not 1 <= sigmoid_degree <= len(row):
        return None
    v = row[sigmoid_degree - 1]
    return v + d_poly if kernel_kind == "polynomial" and model_kind == "klr" else v


DISCREPANCY_NOTE = (
    "published depth is one level above what the exchange protocol's own "
    "multiplications consume; treated as an upper bound"
)


@dataclass
class DepthCheck:
    model_kind: str
    kernel_kind: str | None
    sigmoid_degree: int
    d_poly: int | None
    measured: int
    predicted: int
    published: int | None
    status: str
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status.startswith("pass")

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def verify_depth(measured: int, model_kind: str, sigmoid_degree: int,
                 kernel_kind: str | None = None, d_poly: int = 1) -> DepthCheck:
    """Check a measured max depth against the depth law and the published table.

    LR and polynomial-kernel rows must match exactly; linear and RBF kernel
    rows are upper bounds (the published values carry one extra level).
    """
    if model_kind == "lr":
        kernel_kind = None
    predicted = training_depth(model_kind, sigmoid_degree, kernel_kind, d_poly)
    published = table2_value(model_kind, sigmoid_degree, kernel_kind, d_poly)
    exact_row = model_kind == "lr" or kernel_kind == "polynomial"
    note = ""
    if measured != predicted:
        status = "fail"
        note = f"measured {measured} differs from depth law {predicted}"
    elif published is None:
        status = "pass-untabulated"
    elif measured == published:
        status = "pass-exact"
    elif not exact_row and measured < published:
        status = "pass-upper-bound"
        if measured == published - 1:
            note = DISCREPANCY_NOTE
    else:
        status = "fail"
        note = f"measured {measured} vs published {published}"
    return DepthCheck(
        model_kind=model_kind,
        kernel_kind=kernel_kind,
        sigmoid_degree=sigmoid_degree,
        d_poly=d_poly if kernel_kind == "polynomial" else None,
        measured=measured,
        predicted=predicted,
        published=published,
        status=status,
        note=note,
    )


def min_budget(model_kind: str, sigmoid_degree: int, kernel_kind: str | None = None,
               d_poly: int = 1) -> int:
    return training_depth(model_kind, sigmoid_degree, kernel_kind, d_poly)


__all__ = [
    "CostLedger",
    "LedgerRecorder",
    "LedgerExpectation",
    "merge",
    "verify_table1",
    "verify_depth",
    "table1_expectation",
    "table2_value",
    "training_depth",
    "kernel_entry_depth",
    "ceil_log2",
    "min_budget",
    "Table1Check",
    "DepthCheck",
]
