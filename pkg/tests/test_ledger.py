import pytest
from hypothesis import given
from hypothesis import strategies as st

from securevfl.errors import ConfigError
from securevfl.ledger import (
    DISCREPANCY_NOTE,
    CostLedger,
    LedgerRecorder,
    ceil_log2,
    merge,
    table1_expectation,
    table2_value,
    training_depth,
    verify_depth,
    verify_table1,
)

ledgers = st.builds(
    CostLedger,
    adds=st.integers(0, 1000),
    ct_ct_mults=st.integers(0, 1000),
    ct_pt_mults=st.integers(0, 1000),
    rotations=st.integers(0, 1000),
    max_depth=st.integers(0, 20),
)


def test_merge_empty_is_zero():
    m = merge([])
    assert m.counts() == (0, 0) and m.rotations == 0 and m.max_depth == 0


@given(st.lists(ledgers, max_size=6), st.randoms())
def test_merge_commutative(ls, rnd):
    shuffled = list(ls)
    rnd.shuffle(shuffled)
    assert merge(ls).to_dict() == merge(shuffled).to_dict()


@given(ledgers, ledgers, ledgers)
def test_merge_associative(a, b, c):
    left = merge([merge([a, b]), c])
    right = merge([a, merge([b, c])])
    assert left.to_dict() == right.to_dict()


def test_merge_of_linear_entries():
    n = 7
    entries = [CostLedger(adds=1) for _ in range(n * n)]
    assert merge(entries).adds == n * n


def test_dict_roundtrip():
    led = CostLedger(3, 4, 5, 6, 7, "x")
    back = CostLedger.from_dict(led.to_dict())
    assert back == led and led.to_dict()["mults"] == 9


def test_recorder_root_holds_totals():
    rec = LedgerRecorder()
    rec.push("a")
    rec.record("adds", 1)
    rec.push("b")
    rec.record("ct_pt_mults", 3)
    rec.pop()
    rec.pop()
    assert rec.root.adds == 1 and rec.root.ct_pt_mults == 1 and rec.root.max_depth == 3
    with pytest.raises(RuntimeError):
        rec.pop()


@pytest.mark.parametrize("protocol,params,expected", [
    ("data_exchange", None, (0, 0)),
    ("linear_kernel", None, (1, 0)),
    ("poly_kernel", 5, (2, 4)),
    ("poly_kernel", 1, (2, 0)),
    ("rbf_kernel", None, (4, 1)),
])
def test_table1_expectations(protocol, params, expected):
    e = table1_expectation(protocol, params)
    assert (e.adds, e.mults) == expected


def test_verify_table1_detects_mismatch():
    assert verify_table1(CostLedger(adds=1), "linear_kernel").passed
    assert not verify_table1(CostLedger(adds=2), "linear_kernel").passed
    with pytest.raises(ConfigError):
        verify_table1(CostLedger(), "nope")


def test_ceil_log2():
    assert [ceil_log2(k) for k in range(1, 10)] == [0, 1, 2, 2, 3, 3, 3, 3, 4]


def test_depth_law_lr_row():
    assert [training_depth("lr", d) for d in range(1, 6)] == [3, 4, 5, 5, 6]
    assert [table2_value("lr", d) for d in range(1, 6)] == [3, 4, 5, 5, 6]


@pytest.mark.parametrize("d_poly", [1, 2, 3, 5])
def test_depth_law_matches_poly_row(d_poly):
    for deg in range(1, 6):
        law = training_depth("klr", deg, "polynomial", d_poly)
        assert law == table2_value("klr", deg, "polynomial", d_poly)


def test_verify_depth_statuses():
    assert verify_depth(5, "lr", 3).status == "pass-exact"
    assert verify_depth(7, "klr", 3, "polynomial", 3).status == "pass-exact"
    lin = verify_depth(5, "klr", 3, "linear")
    assert lin.status == "pass-upper-bound" and lin.published == 6 and lin.note == DISCREPANCY_NOTE
    assert verify_depth(6, "klr", 3, "rbf_taylor2").status == "pass-upper-bound"
    assert verify_depth(6, "lr", 7).status == "pass-untabulated"
    assert verify_depth(6, "lr", 3).status == "fail"
    assert not verify_depth(4, "lr", 3).passed


def test_verify_depth_unknown_kernel():
    with pytest.raises(ConfigError):
        verify_depth(3, "klr", 3, "rbf_exact")
