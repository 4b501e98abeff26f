"""Stream derivation: bit-reproducible, collision-free, order-independent."""

import numpy as np
import pytest

from qsdlab import RngStream


def test_same_stream_same_draws():
    a = RngStream(123).generator().random(100)
    b = RngStream(123).generator().random(100)
    assert np.array_equal(a, b)


def test_distinct_paths_distinct_draws():
    base = RngStream(123)
    a = base.child(0).generator().random(50)
    b = base.child(1).generator().random(50)
    assert not np.array_equal(a, b)


def test_child_appends_to_path():
    s = RngStream(7, (3,))
    assert s.child(5).path == (3, 5)
    assert s.child(5).seed == 7


def test_int_id_is_length_one_path():
    assert RngStream(9).child(4) == RngStream(9, (4,))


def test_nested_children_independent_of_sibling_count():
    # child (2, 7) draws the same bits whether or not siblings were touched
    a = RngStream(11).child(2).child(7).generator().random(20)
    parent = RngStream(11)
    for i in range(5):
        parent.child(i).generator().random(3)
    b = RngStream(11).child(2).child(7).generator().random(20)
    assert np.array_equal(a, b)


def test_deep_paths_do_not_collide():
    # (0,1) vs (1,) vs (0,)(1,) style mixups must all differ
    draws = [
        RngStream(5, (0, 1)).generator().random(8),
        RngStream(5, (1,)).generator().random(8),
        RngStream(5, (0,)).generator().random(8),
        RngStream(5, (1, 0)).generator().random(8),
    ]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


@pytest.mark.parametrize("bad", [-1, 1.5, "x"])
def test_invalid_seed_rejected(bad):
    with pytest.raises((ValueError, TypeError)):
        RngStream(bad)


def test_invalid_path_rejected():
    with pytest.raises(ValueError):
        RngStream(3, (-2,))
