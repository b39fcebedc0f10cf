"""Tracked-plaintext leveled HE backend.

A ciphertext carries its true slot values plus the multiplicative depth it has
consumed. Arithmetic is exact double precision, so decryption can be checked
against plaintext re-execution, while the depth counter enforces the same
budget a real leveled scheme would.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from securevfl.errors import (
    BudgetExhaustedError,
    InvalidInputError,
    OperandMismatchError,
    WrongKeyError,
)
from securevfl.ledger import CostLedger, LedgerRecorder, ceil_log2

PlainLike = Union[float, int, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class PublicKey:
    key_id: str
    depth_budget: int


@dataclass(frozen=True)
class KeyPair:
    key_id: str
    depth_budget: int

    @property
    def public(self) -> PublicKey:
        return PublicKey(self.key_id, self.depth_budget)


@dataclass(frozen=True, eq=False)
class TrackedCiphertext:
    payload: np.ndarray
    depth: int
    key_id: str
    budget: int

    def __post_init__(self):
        if self.payload.ndim != 1 or self.payload.size == 0:
            raise InvalidInputError("ciphertext payload must be a non-empty vector")
        if not 0 <= self.depth <= self.budget:
            raise BudgetExhaustedError("construct", self.depth, self.budget)

    def __len__(self) -> int:
        return self.payload.size

    def to_dict(self) -> dict:
        return {
            "type": "ciphertext",
            "key_id": self.key_id,
            "depth": self.depth,
            "budget": self.budget,
            "payload": self.payload.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> TrackedCiphertext:
        return cls(_frozen(d["payload"]), int(d["depth"]), d["key_id"], int(d["budget"]))


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _plain(p: PlainLike, n: int) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim == 0:
        return arr
    if arr.ndim != 1 or arr.size != n:
        raise OperandMismatchError(f"plaintext of shape {arr.shape} does not match {n} slots")
    return arr


class TrackedBackend:
    """Key registry, ciphertext operations and the cost ledger for one run."""

    def __init__(self, scope_tag: str = "run"):
        self._ids = itertools.count(1)
        self._keys: dict[str, KeyPair] = {}
        self.recorder = LedgerRecorder(scope_tag)

    @property
    def ledger(self) -> CostLedger:
        return self.recorder.root

    @contextmanager
    def scope(self, tag: str) -> Iterator[CostLedger]:
        led = self.recorder.push(tag)
        try:
            yield led
        finally:
            self.recorder.pop()

    # -- keys -----------------------------------------------------------------

    def keygen(self, depth_budget: int) -> KeyPair:
        if depth_budget < 0:
            raise InvalidInputError("depth budget must be non-negative")
        key = KeyPair(f"key-{next(self._ids)}", int(depth_budget))
        self._keys[key.key_id] = key
        return key

    def encrypt(self, key: KeyPair | PublicKey, m: PlainLike) -> TrackedCiphertext:
        if key.key_id not in self._keys:
            raise WrongKeyError(f"unknown key {key.key_id}")
        arr = np.atleast_1d(np.asarray(m, dtype=np.float64))
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInputError("cannot encrypt an empty or multi-dimensional message")
        self.recorder.touch_depth(0)
        return TrackedCiphertext(_frozen(arr), 0, key.key_id, key.depth_budget)

    def decrypt(self, key: KeyPair, ct: TrackedCiphertext) -> np.ndarray:
        if not isinstance(key, KeyPair):
            raise WrongKeyError("decryption needs the secret key pair")
        if ct.key_id != key.key_id:
            raise WrongKeyError(f"ciphertext under {ct.key_id} presented to {key.key_id}")
        return ct.payload.copy()

    # -- arithmetic -------------------------------------------------------------

    def _pair(self, a: TrackedCiphertext, b: TrackedCiphertext, op: str) -> None:
        if a.key_id != b.key_id:
            raise OperandMismatchError(f"{op}: operands under different keys")
        if len(a) != len(b):
            raise OperandMismatchError(f"{op}: slot counts {len(a)} and {len(b)} differ")

    def _check_budget(self, op: str, depth: int, budget: int) -> None:
        if depth > budget:
            raise BudgetExhaustedError(op, depth, budget)

    def _emit(self, values: np.ndarray, depth: int, like: TrackedCiphertext,
              counter: str) -> TrackedCiphertext:
        ct = TrackedCiphertext(_frozen(values), depth, like.key_id, like.budget)
        self.recorder.record(counter, depth)
        return ct

    def add(self, a: TrackedCiphertext, b: TrackedCiphertext) -> TrackedCiphertext:
        self._pair(a, b, "add")
        return self._emit(a.payload + b.payload, max(a.depth, b.depth), a, "adds")

    def add_plain(self, a: TrackedCiphertext, p: PlainLike) -> TrackedCiphertext:
        return self._emit(a.payload + _plain(p, len(a)), a.depth, a, "adds")

    def mul(self, a: TrackedCiphertext, b: TrackedCiphertext) -> TrackedCiphertext:
        self._pair(a, b, "mul")
        depth = max(a.depth, b.depth) + 1
        self._check_budget("mul", depth, a.budget)
        return self._emit(a.payload * b.payload, depth, a, "ct_ct_mults")

    def mul_plain(self, a: TrackedCiphertext, p: PlainLike) -> TrackedCiphertext:
        p = _plain(p, len(a))
        self._check_budget("mul_plain", a.depth + 1, a.budget)
        return self._emit(a.payload * p, a.depth + 1, a, "ct_pt_mults")

    def rotate(self, a: TrackedCiphertext, k: int) -> TrackedCiphertext:
        """Cyclic left rotation: slot j of the result holds slot j+k of the input."""
        return self._emit(np.roll(a.payload, -k), a.depth, a, "rotations")

    def rotate_concat(self, a: TrackedCiphertext, b: TrackedCiphertext) -> TrackedCiphertext:
        if a.key_id != b.key_id:
            raise OperandMismatchError("rotate_concat: operands under different keys")
        return self._emit(
            np.concatenate([a.payload, b.payload]), max(a.depth, b.depth), a, "rotations"
        )

    def sum_slots(self, a: TrackedCiphertext) -> TrackedCiphertext:
        """Replicate the total of all slots into every slot by rotate-and-add.

        Uses S(2m) = S(m) + rot(S(m), m) and S(m+1) = v + rot(S(m), 1) over the
        bits of the slot count, so any length costs O(log n) rotations.
        """
        n = len(a)
        acc = a
        m = 1
        for bit in bin(n)[3:]:
            acc = self.add(acc, self.rotate(acc, m))
            m *= 2
            if bit == "1":
                acc = self.add(a, self.rotate(acc, 1))
                m += 1
        return acc

    def dot(self, a: TrackedCiphertext, b: TrackedCiphertext) -> TrackedCiphertext:
        """Encrypted inner product, replicated across slots; one level."""
        return self.sum_slots(self.mul(a, b))

    def power_tree(self, t: TrackedCiphertext, k_max: int) -> list[TrackedCiphertext]:
        """[t, t^2, ..., t^k_max] with depth(t^i) = depth(t) + ceil(log2 i)."""
        if k_max < 1:
            raise InvalidInputError("power_tree needs k_max >= 1")
        self._check_budget("power_tree", t.depth + ceil_log2(k_max), t.budget)
        powers = [t]
        for i in range(2, k_max + 1):
            p = 1 << ((i - 1).bit_length() - 1)
            powers.append(self.mul(powers[p - 1], powers[i - p - 1]))
        return powers
