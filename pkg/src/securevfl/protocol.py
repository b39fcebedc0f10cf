"""Parties, the message channel, and the secure data/kernel exchange protocols.

Alice holds the first feature columns, Bob the remaining columns and the
labels, Eve the key pair. Every value that crosses a party boundary goes
through :class:`Channel`, so the transcript is a complete record of what each
party could observe.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from securevfl.approx import KernelMatrix, KernelSpec, pairwise_inner, pairwise_sq_dist
from securevfl.dataset import VerticalSplit
from securevfl.errors import InvalidInputError, ProtocolError
from securevfl.he_backend import KeyPair, PublicKey, TrackedBackend, TrackedCiphertext
from securevfl.ledger import CostLedger, merge

SCHEMA_VERSION = 1


class PartyId(str, Enum):
    ALICE = "Alice"
    BOB = "Bob"
    EVE = "Eve"


# --- payload encoding ------------------------------------------------------------

def encode_item(item: Any) -> dict:
    if isinstance(item, TrackedCiphertext):
        return item.to_dict()
    if isinstance(item, PublicKey):
        return {"type": "public_key", "key_id": item.key_id, "depth_budget": item.depth_budget}
    if isinstance(item, KeyPair):
        raise ProtocolError("secret keys never travel over the channel")
    if isinstance(item, (list, tuple)) and item and all(isinstance(c, TrackedCiphertext) for c in item):
        return {"type": "ciphertext_list", "items": [c.to_dict() for c in item]}
    if isinstance(item, (bool, int, float, str)) or isinstance(item, np.generic):
        v = item.item() if isinstance(item, np.generic) else item
        return {"type": "param", "value": v}
    arr = np.asarray(item, dtype=np.float64)
    return {"type": "plaintext", "shape": list(arr.shape), "values": arr.ravel().tolist()}


def decode_item(d: dict) -> Any:
    t = d["type"]
    if t == "ciphertext":
        return TrackedCiphertext.from_dict(d)
    if t == "ciphertext_list":
        return [TrackedCiphertext.from_dict(c) for c in d["items"]]
    if t == "public_key":
        return PublicKey(d["key_id"], int(d["depth_budget"]))
    if t == "param":
        return d["value"]
    if t == "plaintext":
        return np.asarray(d["values"], dtype=np.float64).reshape(d["shape"])
    raise ProtocolError(f"unknown payload item type {t!r}")


def encode_payload(payload: dict) -> bytes:
    doc = {name: encode_item(item) for name, item in payload.items()}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def decode_payload(raw: bytes) -> dict:
    return {name: decode_item(d) for name, d in json.loads(raw).items()}


# --- channel -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Message:
    seq: int
    sender: PartyId
    receiver: PartyId
    kind: str
    payload: dict | None

    def encoded(self) -> bytes:
        if self.payload is None:
            raise ProtocolError(f"message {self.seq} carries no recorded payload")
        return encode_payload(self.payload)


class Channel:
    """In-process, ordered, reliable delivery with a global sequence number."""

    def __init__(self):
        self.messages: list[Message] = []
        self._inbox: dict[PartyId, deque[Message]] = {p: deque() for p in PartyId}

    def send(self, sender: PartyId, receiver: PartyId, kind: str, payload: dict) -> Message:
        if sender == receiver:
            raise ProtocolError("a party cannot send to itself")
        msg = Message(len(self.messages) + 1, sender, receiver, kind, dict(payload))
        self.messages.append(msg)
        self._inbox[receiver].append(msg)
        return msg

    def receive(self, party: PartyId, kind: str) -> dict:
        box = self._inbox[party]
        if not box:
            raise ProtocolError(f"{party.value} expected {kind!r} but has no pending message")
        msg = box.popleft()
        if msg.kind != kind:
            raise ProtocolError(f"{party.value} expected {kind!r}, got {msg.kind!r} (seq {msg.seq})")
        return msg.payload

    def mark(self) -> int:
        return len(self.messages)

    def since(self, mark: int) -> list[Message]:
        return self.messages[mark:]


@dataclass
class ProtocolTranscript:
    protocol_name: str
    messages: list[Message]
    ledger: CostLedger = field(default_factory=CostLedger)

    def write_jsonl(self, path: str | Path, record_payloads: bool = False) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            header = {
                "record": "header",
                "schema_version": SCHEMA_VERSION,
                "protocol": self.protocol_name,
                "ledger": self.ledger.to_dict(),
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for m in self.messages:
                raw = m.encoded()
                line = {
                    "record": "message",
                    "schema_version": SCHEMA_VERSION,
                    "seq": m.seq,
                    "from": m.sender.value,
                    "to": m.receiver.value,
                    "kind": m.kind,
                    "payload_digest": hashlib.sha256(raw).hexdigest(),
                    "payload_size_bytes": len(raw),
                }
                if record_payloads:
                    line["payload_b64"] = base64.b64encode(raw).decode("ascii")
                fh.write(json.dumps(line, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path, verify_digests: bool = True) -> ProtocolTranscript:
        name, ledger, messages = "", CostLedger(), []
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                rec = json.loads(text)
                if rec.get("record") == "header":
                    name = rec["protocol"]
                    ledger = CostLedger.from_dict(rec["ledger"])
                    continue
                payload = None
                if "payload_b64" in rec:
                    raw = base64.b64decode(rec["payload_b64"])
                    if verify_digests and hashlib.sha256(raw).hexdigest() != rec["payload_digest"]:
                        raise ProtocolError(f"{path}:{lineno}: payload digest mismatch (seq {rec['seq']})")
                    payload = decode_payload(raw)
                messages.append(Message(rec["seq"], PartyId(rec["from"]), PartyId(rec["to"]),
                                        rec["kind"], payload))
        for a, b in zip(messages, messages[1:]):
            if b.seq <= a.seq:
                raise ProtocolError(f"{path}: sequence numbers not increasing at seq {b.seq}")
        return cls(name, messages, ledger)


# --- parties -------------------------------------------------------------------------

class Eve:
    """Key holder and model owner; never sees feature data."""

    def __init__(self, backend: TrackedBackend, depth_budget: int):
        self.backend = backend
        self.keys = backend.keygen(depth_budget)

    @property
    def public_key(self) -> PublicKey:
        return self.keys.public

    def encrypt(self, values) -> TrackedCiphertext:
        return self.backend.encrypt(self.keys, values)

    def decrypt(self, ct: TrackedCiphertext) -> np.ndarray:
        return self.backend.decrypt(self.keys, ct)


class DataOwner:
    def __init__(self, backend: TrackedBackend, X: np.ndarray):
        self.backend = backend
        self.X = np.asarray(X, dtype=np.float64)
        self.eve_key: PublicKey | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def encrypt(self, values) -> TrackedCiphertext:
        if self.eve_key is None:
            raise ProtocolError("no public key received from Eve yet")
        return self.backend.encrypt(self.eve_key, values)

    def kernel_share(self, spec: KernelSpec) -> list[np.ndarray]:
        """Plaintext rows of this party's additive kernel contribution."""
        if spec.kind in ("linear", "polynomial"):
            return list(pairwise_inner(self.X))
        if spec.kind == "rbf_taylor2":
            return list(-spec.gamma * pairwise_sq_dist(self.X))
        raise ProtocolError(f"no exchange protocol for kernel {spec.kind!r}")


class Alice(DataOwner):
    pass


class Bob(DataOwner):
    def __init__(self, backend: TrackedBackend, X: np.ndarray, y: np.ndarray):
        super().__init__(backend, X)
        self.y = np.asarray(y, dtype=np.float64)


@dataclass
class Federation:
    backend: TrackedBackend
    channel: Channel
    alice: Alice
    bob: Bob
    eve: Eve

    @classmethod
    def create(cls, split: VerticalSplit, depth_budget: int) -> Federation:
        backend = TrackedBackend()
        return cls(
            backend=backend,
            channel=Channel(),
            alice=Alice(backend, split.alice_X),
            bob=Bob(backend, split.bob_X, split.bob_y),
            eve=Eve(backend, depth_budget),
        )

    def transcript(self, name: str, mark: int = 0, ledger: CostLedger | None = None) -> ProtocolTranscript:
        return ProtocolTranscript(name, self.channel.since(mark),
                                  (ledger or self.backend.ledger).copy())

    def distribute_key(self) -> None:
        for p, owner in ((PartyId.ALICE, self.alice), (PartyId.BOB, self.bob)):
            self.channel.send(PartyId.EVE, p, "public_key", {"pk": self.eve.public_key})
            owner.eve_key = self.channel.receive(p, "public_key")["pk"]

    def _check_aligned(self) -> None:
        if self.alice.n != self.bob.n:
            raise ProtocolError(f"Alice has {self.alice.n} rows, Bob has {self.bob.n}")


# --- exchange protocols -----------------------------------------------------------

@dataclass
class FeatureExchange:
    rows: list[TrackedCiphertext]
    ledger: CostLedger
    transcript: ProtocolTranscript


@dataclass
class EncryptedKernel:
    """Bob-held encrypted Gram matrix, one ciphertext per row.

    Each row ciphertext packs all N entries of that row, so one SIMD operation
    per row is one operation per entry; ``entry_ledger`` is therefore the cost
    of computing a single kernel entry.
    """

    rows: list[TrackedCiphertext]
    spec: KernelSpec
    row_ledgers: list[CostLedger]
    ledger: CostLedger
    transcript: ProtocolTranscript

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def entry_ledger(self) -> CostLedger:
        return self.row_ledgers[0]

    @property
    def depth(self) -> int:
        return self.rows[0].depth

    def decrypt(self, eve: Eve) -> KernelMatrix:
        return KernelMatrix(np.vstack([eve.decrypt(r) for r in self.rows]), self.spec,
                            "secure_exchange")


def exchange_features(fed: Federation) -> FeatureExchange:
    """Bob ends up with one ciphertext [x_i^A | x_i^B] per sample."""
    fed._check_aligned()
    mark = fed.channel.mark()
    be = fed.backend
    with be.scope("data_exchange") as led:
        fed.distribute_key()
        enc_a = [fed.alice.encrypt(row) for row in fed.alice.X]
        fed.channel.send(PartyId.ALICE, PartyId.BOB, "encrypted_features", {"rows": enc_a})
        enc_a = fed.channel.receive(PartyId.BOB, "encrypted_features")["rows"]
        if len(enc_a) != fed.bob.n:
            raise ProtocolError("received feature rows do not match Bob's sample count")
        rows = [be.rotate_concat(a, fed.bob.encrypt(b)) for a, b in zip(enc_a, fed.bob.X)]
    return FeatureExchange(rows, led.copy(), fed.transcript("data_exchange", mark, led))


def _send_shares(fed: Federation, kind: str, shares: dict[str, list[np.ndarray]]) -> dict:
    enc = {name: [fed.alice.encrypt(r) for r in rows] for name, rows in shares.items()}
    fed.channel.send(PartyId.ALICE, PartyId.BOB, kind, enc)
    got = fed.channel.receive(PartyId.BOB, kind)
    if any(len(v) != fed.bob.n for v in got.values()):
        raise ProtocolError("received kernel rows do not match Bob's sample count")
    return got


def _kernel_protocol(fed: Federation, spec: KernelSpec, name: str, per_row) -> EncryptedKernel:
    fed._check_aligned()
    mark = fed.channel.mark()
    be = fed.backend
    row_ledgers = []
    rows = []
    with be.scope(name) as led:
        fed.distribute_key()
        a_share = fed.alice.kernel_share(spec)
        if spec.kind == "rbf_taylor2":
            shares = {"K_A1": a_share, "K_A2": [r / math.sqrt(2.0) for r in a_share]}
        else:
            shares = {"K_A": a_share}
        received = _send_shares(fed, f"{name}_share", shares)
        b_share = fed.bob.kernel_share(spec)
        for i in range(fed.bob.n):
            with be.scope(f"{name}[{i}]") as row_led:
                rows.append(per_row(be, fed.bob, {k: v[i] for k, v in received.items()}, b_share[i]))
            row_ledgers.append(row_led.copy())
    return EncryptedKernel(rows, spec, row_ledgers, led.copy(), fed.transcript(name, mark, led))


def exchange_linear_kernel(fed: Federation) -> EncryptedKernel:
    def row(be, bob, a, kb):
        return be.add(a["K_A"], bob.encrypt(kb))

    return _kernel_protocol(fed, KernelSpec.linear(), "linear_kernel", row)


def exchange_poly_kernel(fed: Federation, c: float = 1.0, d_poly: int = 3) -> EncryptedKernel:
    spec = KernelSpec.polynomial(c, d_poly)

    def row(be, bob, a, kb):
        k1 = be.add(a["K_A"], bob.encrypt(kb))
        k2 = be.add_plain(k1, spec.c)
        kp = k2
        for _ in range(spec.d_poly - 1):
            kp = be.mul(kp, k2)
        return kp

    return _kernel_protocol(fed, spec, "poly_kernel", row)


def exchange_rbf_kernel(fed: Federation, gamma: float = 1.0) -> EncryptedKernel:
    """Second-order Taylor RBF: 1 + u + (u/sqrt2)^2 with u split additively."""
    spec = KernelSpec.rbf(gamma, taylor=True)

    def row(be, bob, a, kb):
        k1 = be.add(a["K_A1"], bob.encrypt(kb))
        k2 = be.add(a["K_A2"], bob.encrypt(kb / math.sqrt(2.0)))
        sq = be.mul(k2, k2)
        return be.add(be.add_plain(k1, 1.0), sq)

    return _kernel_protocol(fed, spec, "rbf_kernel", row)


def exchange_kernel(fed: Federation, spec: KernelSpec) -> EncryptedKernel:
    if spec.kind == "linear":
        return exchange_linear_kernel(fed)
    if spec.kind == "polynomial":
        return exchange_poly_kernel(fed, spec.c, spec.d_poly)
    if spec.kind == "rbf_taylor2":
        return exchange_rbf_kernel(fed, spec.gamma)
    raise InvalidInputError(f"kernel {spec.kind!r} has no secure exchange protocol")


# --- transcript audit --------------------------------------------------------------

# Message kinds whose contents Eve is meant to learn: the per-iteration
# gradient aggregate she decrypts to update the model.
EVE_WHITELIST = frozenset({"gradient"})


@dataclass
class AuditFinding:
    seq: int
    sender: str
    receiver: str
    kind: str
    item: str
    reason: str

    def __str__(self) -> str:
        return f"seq {self.seq} {self.sender}->{self.receiver} [{self.kind}/{self.item}]: {self.reason}"


@dataclass
class AuditReport:
    protocol_name: str
    messages_checked: int
    findings: list[AuditFinding] = field(default_factory=list)
    whitelisted: list[AuditFinding] = field(default_factory=list)
    unchecked: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.findings

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol_name,
            "passed": self.passed,
            "messages_checked": self.messages_checked,
            "findings": [vars(f) for f in self.findings],
            "whitelisted": [vars(f) for f in self.whitelisted],
            "unchecked_seqs": self.unchecked,
        }


def _numeric_arrays(item: Any) -> list[np.ndarray]:
    if isinstance(item, TrackedCiphertext):
        return [item.payload]
    if isinstance(item, list) and item and isinstance(item[0], TrackedCiphertext):
        return [c.payload for c in item]
    if isinstance(item, np.ndarray):
        return [item.ravel()]
    return []


def _contains_row(values: np.ndarray, rows: np.ndarray) -> int | None:
    """Index of a feature row appearing as a contiguous run inside ``values``."""
    w = rows.shape[1]
    if values.size < w:
        return None
    windows = np.lib.stride_tricks.sliding_window_view(values, w)
    for i, r in enumerate(rows):
        if np.any(np.all(windows == r, axis=1)):
            return i
    return None


def audit_transcript(t: ProtocolTranscript,
                     party_data: dict[PartyId, np.ndarray] | None = None) -> AuditReport:
    """Scan a transcript for data an honest-but-curious receiver could read.

    Rules: Alice and Bob may send plaintext only as scalar protocol parameters
    or public keys; anything they encrypt must not go to the key holder (Eve)
    except the whitelisted gradient aggregate. When ``party_data`` is given,
    every readable array is also searched for a raw feature row.
    """
    report = AuditReport(t.protocol_name, len(t.messages))
    for m in t.messages:
        if m.payload is None:
            report.unchecked.append(m.seq)
            continue
        for name, item in m.payload.items():
            def flag(reason, bucket=report.findings):
                bucket.append(AuditFinding(m.seq, m.sender.value, m.receiver.value, m.kind, name, reason))

            readable = m.receiver == PartyId.EVE or not isinstance(
                item, (TrackedCiphertext, list, PublicKey))
            if m.sender in (PartyId.ALICE, PartyId.BOB):
                if m.receiver == PartyId.EVE and m.kind in EVE_WHITELIST:
                    flag("gradient aggregate decrypted by Eve (inherent to the protocol)",
                         report.whitelisted)
                    continue
                if isinstance(item, np.ndarray):
                    flag("plaintext array sent by a data owner")
                elif readable and _numeric_arrays(item):
                    flag("ciphertext under Eve's key sent to Eve, who can decrypt it")
            if party_data and readable:
                arrays = _numeric_arrays(item)
                for owner, rows in party_data.items():
                    if owner == m.receiver:
                        continue
                    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
                    hit = next((i for i in (_contains_row(a, rows) for a in arrays) if i is not None), None)
                    if hit is not None:
                        flag(f"contains raw feature row {hit} of {owner.value}")
    return report
