import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from securevfl.errors import (
    BudgetExhaustedError,
    InvalidInputError,
    OperandMismatchError,
    WrongKeyError,
)
from securevfl.he_backend import TrackedBackend, TrackedCiphertext
from securevfl.ledger import ceil_log2


@pytest.fixture
def be():
    return TrackedBackend()


@pytest.fixture
def key(be):
    return be.keygen(6)


def test_keygen_ids_unique_and_budget_fixed(be):
    keys = [be.keygen(3) for _ in range(5)]
    assert len({k.key_id for k in keys}) == 5
    with pytest.raises(Exception):
        keys[0].depth_budget = 9
    with pytest.raises(InvalidInputError):
        be.keygen(-1)


def test_encrypt_decrypt_roundtrip(be, key):
    ct = be.encrypt(key.public, [1.5, -2.0, 3.25])
    assert ct.depth == 0
    np.testing.assert_array_equal(be.decrypt(key, ct), [1.5, -2.0, 3.25])


def test_payload_is_read_only(be, key):
    ct = be.encrypt(key, [1.0, 2.0])
    with pytest.raises(ValueError):
        ct.payload[0] = 5.0


def test_decrypt_with_other_key_fails(be, key):
    other = be.keygen(6)
    ct = be.encrypt(key, [1.0])
    with pytest.raises(WrongKeyError):
        be.decrypt(other, ct)
    with pytest.raises(WrongKeyError):
        be.decrypt(key.public, ct)


def test_encrypt_rejects_empty(be, key):
    with pytest.raises(InvalidInputError):
        be.encrypt(key, [])
    with pytest.raises(InvalidInputError):
        be.encrypt(key, np.ones((2, 2)))


def test_mixed_keys_and_lengths_rejected(be, key):
    other = be.keygen(6)
    a = be.encrypt(key, [1.0, 2.0])
    with pytest.raises(OperandMismatchError):
        be.add(a, be.encrypt(other, [1.0, 2.0]))
    with pytest.raises(OperandMismatchError):
        be.mul(a, be.encrypt(key, [1.0, 2.0, 3.0]))
    with pytest.raises(OperandMismatchError):
        be.add_plain(a, [1.0, 2.0, 3.0])


def test_depth_rules(be, key):
    a = be.encrypt(key, [2.0, 3.0])
    b = be.mul(a, a)
    assert b.depth == 1
    assert be.add(a, b).depth == 1
    assert be.mul_plain(b, 2.0).depth == 2
    assert be.mul(b, a).depth == 2
    assert be.rotate(b, 1).depth == 1
    assert be.add_plain(b, 1.0).depth == 1


def test_cube_has_depth_two(be, key):
    x = be.encrypt(key, [1.5])
    x2 = be.mul(x, x)
    x3 = be.mul(x2, x)
    assert x3.depth == 2
    assert be.decrypt(key, x3)[0] == pytest.approx(1.5 ** 3)


def test_budget_boundary(be):
    k = be.keygen(2)
    x = be.encrypt(k, [1.1])
    x2 = be.mul(x, x)
    x4 = be.mul(x2, x2)
    assert x4.depth == 2
    before = be.ledger.copy()
    with pytest.raises(BudgetExhaustedError) as err:
        be.mul(x4, x)
    assert err.value.required == 3 and err.value.budget == 2
    assert "raise the budget" in str(err.value)
    with pytest.raises(BudgetExhaustedError):
        be.mul_plain(x4, 2.0)
    assert be.ledger.counts() == before.counts()


def test_zero_budget_allows_only_linear_ops(be):
    k = be.keygen(0)
    x = be.encrypt(k, [1.0, 2.0])
    assert be.decrypt(k, be.add(x, be.rotate(x, 1))).tolist() == [3.0, 3.0]
    with pytest.raises(BudgetExhaustedError):
        be.mul(x, x)


def test_rotate_left(be, key):
    x = be.encrypt(key, [1.0, 2.0, 3.0, 4.0])
    assert be.decrypt(key, be.rotate(x, 1)).tolist() == [2.0, 3.0, 4.0, 1.0]


@pytest.mark.parametrize("n", [1, 2, 3, 5, 7, 8, 13, 100])
def test_sum_slots_replicates_total(be, key, n):
    v = np.arange(1, n + 1, dtype=float)
    s = be.sum_slots(be.encrypt(key, v))
    np.testing.assert_array_equal(be.decrypt(key, s), np.full(n, v.sum()))
    assert s.depth == 0


def test_dot_product_one_level(be, key):
    a = be.encrypt(key, [1.0, 2.0, 3.0])
    b = be.encrypt(key, [4.0, -1.0, 0.5])
    d = be.dot(a, b)
    assert d.depth == 1
    np.testing.assert_allclose(be.decrypt(key, d), 3.5)


@pytest.mark.parametrize("k", range(1, 17))
def test_power_tree_depth_law(k):
    be = TrackedBackend()
    key = be.keygen(ceil_log2(k))
    t = be.encrypt(key, [1.01, -0.7])
    powers = be.power_tree(t, k)
    assert len(powers) == k
    for i, p in enumerate(powers, start=1):
        assert p.depth == ceil_log2(i)
        np.testing.assert_allclose(be.decrypt(key, p), np.array([1.01, -0.7]) ** i, rtol=1e-13)
    assert be.ledger.ct_ct_mults == k - 1


def test_power_tree_insufficient_budget():
    be = TrackedBackend()
    key = be.keygen(2)
    t = be.encrypt(key, [1.0])
    with pytest.raises(BudgetExhaustedError):
        be.power_tree(t, 5)
    assert be.ledger.ct_ct_mults == 0


def test_each_op_increments_one_counter(be, key):
    x = be.encrypt(key, [1.0, 2.0])
    ops = [
        (lambda: be.add(x, x), "adds"),
        (lambda: be.add_plain(x, 1.0), "adds"),
        (lambda: be.mul(x, x), "ct_ct_mults"),
        (lambda: be.mul_plain(x, [2.0, 3.0]), "ct_pt_mults"),
        (lambda: be.rotate(x, 1), "rotations"),
        (lambda: be.rotate_concat(x, x), "rotations"),
    ]
    for op, counter in ops:
        before = be.ledger.copy()
        op()
        after = be.ledger
        for name in ("adds", "ct_ct_mults", "ct_pt_mults", "rotations"):
            delta = getattr(after, name) - getattr(before, name)
            assert delta == (1 if name == counter else 0), (counter, name)


def test_scopes_merge_into_root(be, key):
    x = be.encrypt(key, [1.0])
    with be.scope("outer") as outer:
        be.add(x, x)
        with be.scope("inner") as inner:
            be.mul(x, x)
        assert inner.ct_ct_mults == 1
    assert outer.adds == 1 and outer.ct_ct_mults == 1
    assert be.ledger.adds == 1 and be.ledger.ct_ct_mults == 1 and be.ledger.max_depth == 1


def test_ciphertext_dict_roundtrip(be, key):
    ct = be.mul(be.encrypt(key, [0.1, 0.2]), be.encrypt(key, [3.0, 4.0]))
    back = TrackedCiphertext.from_dict(ct.to_dict())
    assert back.depth == ct.depth and back.key_id == ct.key_id and back.budget == ct.budget
    np.testing.assert_array_equal(back.payload, ct.payload)


# --- random op trees --------------------------------------------------------------

LEAF = st.tuples(st.just("leaf"), st.integers(0, 3))


def _trees(max_depth):
    if max_depth == 0:
        return LEAF
    sub = _trees(max_depth - 1)
    return st.one_of(
        LEAF,
        st.tuples(st.sampled_from(["add", "mul"]), sub, sub),
        st.tuples(st.sampled_from(["add_plain", "mul_plain"]), sub,
                  st.floats(-2, 2, allow_nan=False)),
        st.tuples(st.just("rotate"), sub, st.integers(-3, 3)),
    )


def _eval(tree, be, leaves_ct, leaves):
    """Evaluate once homomorphically and once in plaintext; return (ct, plain, depth)."""
    op = tree[0]
    if op == "leaf":
        return leaves_ct[tree[1]], leaves[tree[1]], 0
    if op in ("add", "mul"):
        a, pa, da = _eval(tree[1], be, leaves_ct, leaves)
        b, pb, db = _eval(tree[2], be, leaves_ct, leaves)
        if op == "add":
            return be.add(a, b), pa + pb, max(da, db)
        return be.mul(a, b), pa * pb, max(da, db) + 1
    a, pa, da = _eval(tree[1], be, leaves_ct, leaves)
    if op == "add_plain":
        return be.add_plain(a, tree[2]), pa + tree[2], da
    if op == "mul_plain":
        return be.mul_plain(a, tree[2]), pa * tree[2], da + 1
    return be.rotate(a, tree[2]), np.roll(pa, -tree[2]), da


@settings(max_examples=1000, deadline=None)
@given(tree=_trees(6), seed=st.integers(0, 2**16))
def test_random_op_trees_match_plaintext(tree, seed):
    rng = np.random.default_rng(seed)
    be = TrackedBackend()
    key = be.keygen(64)
    leaves = [rng.uniform(-1, 1, size=4) for _ in range(4)]
    cts = [be.encrypt(key, v) for v in leaves]
    ct, plain, depth = _eval(tree, be, cts, leaves)
    assert ct.depth == depth
    np.testing.assert_allclose(be.decrypt(key, ct), plain, rtol=1e-12, atol=1e-12)
