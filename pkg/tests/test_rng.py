import numpy as np

from awmeta import make_rng


def test_same_seed_same_stream():
    a = make_rng(7, "train").normal(size=8)
    b = make_rng(7, "train").normal(size=8)
    assert np.array_equal(a, b)


def test_streams_are_independent():
    a = make_rng(7, "train").normal(size=8)
    b = make_rng(7, "eval").normal(size=8)
    c = make_rng(8, "train").normal(size=8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_tag_types():
    # string and int tags both allowed, order matters
    a = make_rng(0, "eval", 5).normal(size=4)
    b = make_rng(0, "eval", 5).normal(size=4)
    c = make_rng(0, 5, "eval").normal(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_no_tags_is_valid():
    a = make_rng(3).integers(1 << 30)
    b = make_rng(3).integers(1 << 30)
    assert a == b
