import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_split
from securevfl.approx import KernelSpec, gram_matrix
from securevfl.dataset import VerticalSplit
from securevfl.errors import BudgetExhaustedError, ProtocolError
from securevfl.he_backend import TrackedBackend
from securevfl.ledger import verify_table1
from securevfl.protocol import (
    Alice,
    Bob,
    Channel,
    Eve,
    Federation,
    Message,
    PartyId,
    ProtocolTranscript,
    audit_transcript,
    decode_payload,
    encode_payload,
    exchange_features,
    exchange_kernel,
    exchange_linear_kernel,
    exchange_poly_kernel,
    exchange_rbf_kernel,
)
from securevfl.training import TrainConfig, secure_train_lr


def owners(split):
    return {PartyId.ALICE: split.alice_X, PartyId.BOB: split.bob_X}


def test_feature_exchange_concatenates_rows():
    s = make_split(n=25, d_a=2, d_b=3)
    fed = Federation.create(s, 0)
    fx = exchange_features(fed)
    assert len(fx.rows) == 25
    joined = s.joined().X
    for i in np.random.default_rng(0).choice(25, 20, replace=False):
        np.testing.assert_array_equal(fed.eve.decrypt(fx.rows[i]), joined[i])
    assert fx.ledger.counts() == (0, 0)
    assert verify_table1(fx.ledger, "data_exchange").passed
    assert all(r.depth == 0 for r in fx.rows)


def test_feature_exchange_transcript_audits_clean(split):
    fed = Federation.create(split, 0)
    t = exchange_features(fed).transcript
    kinds = [m.kind for m in t.messages]
    assert kinds == ["public_key", "public_key", "encrypted_features"]
    assert audit_transcript(t, owners(split)).passed


def test_linear_kernel_unit_norm_diagonal():
    s = make_split(n=4, d_a=1, d_b=1)
    X = s.joined().X
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    unit = VerticalSplit(X[:, :1], X[:, 1:], s.bob_y)
    fed = Federation.create(unit, 0)
    K = exchange_linear_kernel(fed).decrypt(fed.eve).entries
    np.testing.assert_allclose(np.diag(K), 1.0, rtol=1e-15)


@pytest.mark.parametrize("spec,protocol,expected,depth", [
    (KernelSpec.linear(), "linear_kernel", (1, 0), 0),
    (KernelSpec.polynomial(1.0, 1), "poly_kernel", (2, 0), 0),
    (KernelSpec.polynomial(1.0, 2), "poly_kernel", (2, 1), 1),
    (KernelSpec.polynomial(0.5, 3), "poly_kernel", (2, 2), 2),
    (KernelSpec.polynomial(1.0, 5), "poly_kernel", (2, 4), 4),
    (KernelSpec.rbf(0.4, taylor=True), "rbf_kernel", (4, 1), 1),
], ids=lambda v: getattr(v, "label", None))
def test_kernel_exchange_costs_and_oracle(split, spec, protocol, expected, depth):
    fed = Federation.create(split, 4)
    ek = exchange_kernel(fed, spec)
    assert len(ek.row_ledgers) == split.n
    assert all(led.counts() == expected for led in ek.row_ledgers)
    assert verify_table1(ek.entry_ledger, protocol, spec.d_poly).passed
    assert {r.depth for r in ek.rows} == {depth}
    assert {r.key_id for r in ek.rows} == {fed.eve.public_key.key_id}
    got = ek.decrypt(fed.eve)
    assert got.provenance == "secure_exchange"
    np.testing.assert_allclose(got.entries, gram_matrix(spec, split.joined().X).entries,
                               rtol=1e-9, atol=1e-9)
    assert audit_transcript(ek.transcript, owners(split)).passed


def test_full_matrix_ledger_is_merge_of_entries(split):
    fed = Federation.create(split, 0)
    ek = exchange_linear_kernel(fed)
    assert ek.ledger.adds == split.n


def test_rbf_diagonal_exactly_one(split):
    fed = Federation.create(split, 1)
    K = exchange_rbf_kernel(fed, 2.0).decrypt(fed.eve).entries
    assert np.all(np.diag(K) == 1.0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 30), d_a=st.integers(1, 3), d_b=st.integers(1, 3),
       kind=st.sampled_from(["linear", "polynomial", "rbf_taylor2"]), seed=st.integers(0, 999))
def test_exchange_equals_plaintext_oracle(n, d_a, d_b, kind, seed):
    s = make_split(n, d_a, d_b, seed)
    spec = {"linear": KernelSpec.linear(), "polynomial": KernelSpec.polynomial(1.0, 3),
            "rbf_taylor2": KernelSpec.rbf(0.3, taylor=True)}[kind]
    fed = Federation.create(s, 2)
    got = exchange_kernel(fed, spec).decrypt(fed.eve).entries
    want = gram_matrix(spec, s.joined().X).entries
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-9)


def test_poly_exchange_budget_exhausted(split):
    fed = Federation.create(split, 1)
    with pytest.raises(BudgetExhaustedError):
        exchange_poly_kernel(fed, 1.0, 3)


def test_exact_rbf_has_no_protocol(split):
    with pytest.raises(ValueError):
        exchange_kernel(Federation.create(split, 3), KernelSpec.rbf(1.0))


def test_row_count_mismatch_rejected():
    be = TrackedBackend()
    rng = np.random.default_rng(0)
    fed = Federation(be, Channel(), Alice(be, rng.normal(size=(4, 1))),
                     Bob(be, rng.normal(size=(5, 1)), np.ones(5)), Eve(be, 3))
    for run in (exchange_features, exchange_linear_kernel):
        with pytest.raises(ProtocolError):
            run(fed)


# --- channel -----------------------------------------------------------------------

def test_channel_order_and_kind_checks():
    ch = Channel()
    ch.send(PartyId.ALICE, PartyId.BOB, "a", {"x": 1})
    ch.send(PartyId.ALICE, PartyId.BOB, "b", {"x": 2})
    assert [m.seq for m in ch.messages] == [1, 2]
    with pytest.raises(ProtocolError):
        ch.receive(PartyId.BOB, "b")
    with pytest.raises(ProtocolError):
        ch.receive(PartyId.EVE, "a")
    with pytest.raises(ProtocolError):
        ch.send(PartyId.BOB, PartyId.BOB, "self", {})


def test_secret_key_never_serialized():
    be = TrackedBackend()
    with pytest.raises(ProtocolError):
        encode_payload({"sk": be.keygen(1)})


def test_payload_codec_roundtrip():
    be = TrackedBackend()
    k = be.keygen(2)
    payload = {"ct": be.encrypt(k, [1.0, 2.0]), "pk": k.public, "lr": 0.5,
               "rows": [be.encrypt(k, [3.0])], "arr": np.arange(4.0).reshape(2, 2)}
    back = decode_payload(encode_payload(payload))
    np.testing.assert_array_equal(back["ct"].payload, [1.0, 2.0])
    assert back["pk"] == k.public and back["lr"] == 0.5
    np.testing.assert_array_equal(back["arr"], payload["arr"])
    assert encode_payload(back) == encode_payload(payload)


# --- transcripts and audit ----------------------------------------------------------

def test_transcript_jsonl_roundtrip(tmp_path, split):
    r = secure_train_lr(split, TrainConfig(learning_rate=0.5, iterations=2))
    path = tmp_path / "t.jsonl"
    r.transcript.write_jsonl(path, record_payloads=True)
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert lines[0]["record"] == "header"
    msgs = lines[1:]
    assert [m["seq"] for m in msgs] == sorted(m["seq"] for m in msgs)
    assert {"seq", "from", "to", "kind", "payload_digest", "payload_size_bytes",
            "schema_version", "payload_b64"} <= set(msgs[0])
    back = ProtocolTranscript.read_jsonl(path)
    assert len(back.messages) == len(r.transcript.messages)
    assert back.ledger.to_dict() == r.transcript.ledger.to_dict()
    rep = audit_transcript(back, owners(split))
    assert rep.passed and rep.whitelisted


def test_transcript_without_payloads(tmp_path, split):
    fed = Federation.create(split, 0)
    t = exchange_features(fed).transcript
    t.write_jsonl(tmp_path / "t.jsonl")
    rec = json.loads((tmp_path / "t.jsonl").read_text().splitlines()[1])
    assert "payload_b64" not in rec and len(rec["payload_digest"]) == 64
    back = ProtocolTranscript.read_jsonl(tmp_path / "t.jsonl")
    assert audit_transcript(back).unchecked == [m.seq for m in back.messages]


def test_tampered_payload_detected(tmp_path, split):
    fed = Federation.create(split, 0)
    exchange_features(fed).transcript.write_jsonl(tmp_path / "t.jsonl", record_payloads=True)
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    rec = json.loads(lines[1])
    rec["payload_digest"] = "0" * 64
    lines[1] = json.dumps(rec)
    (tmp_path / "t.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(ProtocolError, match="digest"):
        ProtocolTranscript.read_jsonl(tmp_path / "t.jsonl")


def test_seeded_raw_row_fault_detected(split):
    fed = Federation.create(split, 0)
    t = exchange_features(fed).transcript
    leak = Message(len(t.messages) + 1, PartyId.ALICE, PartyId.BOB, "debug",
                   {"row": np.array(split.alice_X[3])})
    t.messages.append(leak)
    rep = audit_transcript(t, owners(split))
    assert not rep.passed
    assert {f.seq for f in rep.findings} == {leak.seq}
    assert any("raw feature row 3 of Alice" in f.reason for f in rep.findings)
    assert f"seq {leak.seq}" in str(rep.findings[0])


def test_ciphertext_to_eve_is_flagged(split):
    fed = Federation.create(split, 0)
    t = exchange_features(fed).transcript
    fed.distribute_key()
    ct = fed.bob.encrypt(split.bob_X[0])
    t.messages.append(Message(99, PartyId.BOB, PartyId.EVE, "oops", {"c": ct}))
    rep = audit_transcript(t, owners(split))
    reasons = " ".join(f.reason for f in rep.findings)
    assert "Eve" in reasons and "raw feature row 0 of Bob" in reasons


def test_secure_training_gradient_whitelisted(split):
    r = secure_train_lr(split, TrainConfig(learning_rate=0.5, iterations=3))
    rep = audit_transcript(r.transcript, owners(split))
    assert rep.passed
    grad_seqs = [m.seq for m in r.transcript.messages if m.kind == "gradient"]
    assert len(grad_seqs) == 3
    assert {f.seq for f in rep.whitelisted} == set(grad_seqs)
    assert rep.to_dict()["passed"] is True
