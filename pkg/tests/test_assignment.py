import numpy as np
import pytest

from awmeta import (
    AssignmentSet,
    ValidationError,
    any_way_loss,
    ensembled_logit,
    extract,
    generate_assignments,
    make_rng,
    one_hot,
    predict,
    softmax,
    softmax_cross_entropy,
)


def test_worked_extraction_example():
    # nodes (3,5,2) pick logit entries 3,5,2 out of 8
    s = np.array([3, 5, 2])
    v = np.array([10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0])
    assert extract(s, v).tolist() == [30.0, 50.0, 20.0]
    with pytest.raises(Exception):
        extract(np.array([0, 1]), v)  # 0 is not a valid node


def test_assignment_set_validation():
    ok = AssignmentSet(o=6, n=3, vectors=np.array([[1, 4, 2], [3, 6, 5]]))
    assert ok.j == 2 and ok.unassigned == []
    with pytest.raises(ValidationError):
        AssignmentSet(o=6, n=3, vectors=np.array([[1, 2, 2]]))  # repeat in vector
    with pytest.raises(ValidationError):
        AssignmentSet(o=6, n=3, vectors=np.array([[1, 2, 3], [3, 4, 5]]))  # overlap
    with pytest.raises(ValidationError):
        AssignmentSet(o=6, n=3, vectors=np.array([[0, 1, 2]]))  # 0 not a node
    with pytest.raises(ValidationError):
        AssignmentSet(o=6, n=3, vectors=np.array([[1, 2, 7]]))  # beyond width


def test_generated_assignments_invariants():
    rng = make_rng(0, "gen")
    for _ in range(100):
        o = int(rng.integers(3, 20))
        n = int(rng.integers(1, o + 1))
        aset = generate_assignments(o, n, rng)
        assert aset.j == o // n
        assert aset.vectors.shape == (aset.j, n)
        used = aset.vectors.ravel().tolist()
        assert len(set(used)) == len(used)
        assert len(aset.unassigned) == o - aset.j * n
        assert set(used) | set(aset.unassigned) == set(range(1, o + 1))


def test_line_roundtrip():
    rng = make_rng(1, "line")
    aset = generate_assignments(9, 4, rng)
    back = AssignmentSet.from_line(aset.to_line())
    assert back.o == aset.o and back.n == aset.n
    assert np.array_equal(back.vectors, aset.vectors)


def test_loss_decomposes_into_per_vector_ce():
    rng = make_rng(2, "decomp")
    for _ in range(30):
        o = int(rng.integers(4, 16))
        n = int(rng.integers(2, min(o, 6) + 1))
        aset = generate_assignments(o, n, rng)
        b = int(rng.integers(1, 5))
        z = rng.normal(size=(b, o))
        t = one_hot(rng.integers(1, n + 1, size=b), n)
        total, _ = any_way_loss(aset, z, t)
        parts = sum(softmax_cross_entropy(z[:, s - 1], t)[0] for s in aset.vectors)
        assert abs(total - parts) < 1e-12


def test_unassigned_nodes_get_zero_gradient():
    rng = make_rng(3, "zero")
    for _ in range(20):
        aset = generate_assignments(10, 3, rng)  # 1 node unassigned
        z = rng.normal(size=(4, 10))
        t = one_hot(rng.integers(1, 4, size=4), 3)
        _, dz = any_way_loss(aset, z, t)
        for node in aset.unassigned:
            assert np.all(dz[:, node - 1] == 0.0)


def test_loss_gradient_matches_per_vector_softmax():
    aset = AssignmentSet(o=4, n=2, vectors=np.array([[3, 1], [2, 4]]))
    z = np.array([[0.2, -0.1, 0.4, 0.0]])
    t = one_hot(np.array([1]), 2)
    _, dz = any_way_loss(aset, z, t)
    # column 3 and 1 belong to vector one; gradient is (softmax - t)/B scattered back
    p1 = softmax(z[:, [2, 0]])
    p2 = softmax(z[:, [1, 3]])
    assert np.allclose(dz[:, [2, 0]], p1 - t, atol=1e-12)
    assert np.allclose(dz[:, [1, 3]], p2 - t, atol=1e-12)


def test_ensemble_methods_oracle():
    aset = AssignmentSet(o=4, n=2, vectors=np.array([[1, 2], [3, 4]]))
    z = np.array([[1.0, 0.0, 0.0, 2.0]])
    orig = ensembled_logit(aset, z, "original")
    assert np.allclose(orig, [[1.0, 2.0]], atol=1e-12)
    soft = ensembled_logit(aset, z, "softmax")
    expect = softmax(z[:, [0, 1]]) + softmax(z[:, [2, 3]])
    assert np.allclose(soft, expect, atol=1e-12)
    mx = ensembled_logit(aset, z, "max")
    assert np.allclose(mx, [[1.0, 2.0]], atol=1e-12)


def test_predict_breaks_ties_low():
    assert predict(np.array([[0.5, 0.5, 0.1]])).tolist() == [1]
    assert predict(np.array([[0.1, 0.7, 0.7]])).tolist() == [2]


def test_single_vector_loss_is_plain_ce():
    rng = make_rng(4, "single")
    z = rng.normal(size=(3, 5))
    t = one_hot(np.array([2, 1, 5]), 5)
    aset = AssignmentSet(o=5, n=5, vectors=np.arange(1, 6)[None, :])
    total, dz = any_way_loss(aset, z, t)
    ce, dce = softmax_cross_entropy(z, t)
    assert total == ce  # identity assignment, bitwise equal
    assert np.array_equal(dz, dce)
