import numpy as np

from bookwalk.streams import RandomStream, node_generator


def test_identical_seed_and_stream_reproduce():
    a = RandomStream(123, 4)
    b = RandomStream(123, 4)
    assert [a.coin(0.5) for _ in range(50)] == [b.coin(0.5) for _ in range(50)]
    assert [a.value_uniform() for _ in range(50)] == [b.value_uniform() for _ in range(50)]


def test_coin_and_value_substreams_are_disjoint():
    # interleaving value draws must not shift the coin sequence
    a = RandomStream(7)
    b = RandomStream(7)
    coins_a = [a.coin(0.3) for _ in range(20)]
    coins_b = []
    for _ in range(20):
        b.value_uniform()
        coins_b.append(b.coin(0.3))
    assert coins_a == coins_b


def test_split_streams_differ():
    a = RandomStream(5, 0)
    b = a.split(1)
    xs = [a.value_uniform() for _ in range(20)]
    ys = [b.value_uniform() for _ in range(20)]
    assert xs != ys


def test_seed_validation():
    import pytest

    with pytest.raises(ValueError):
        RandomStream(-1)
    with pytest.raises(ValueError):
        RandomStream(1, -2)


def test_node_generator_keyed_by_path():
    g1 = node_generator(9, 0, (0, 1, 2))
    g2 = node_generator(9, 0, (0, 1, 2))
    g3 = node_generator(9, 0, (0, 1, 3))
    g4 = node_generator(9, 1, (0, 1, 2))
    x1, x2, x3, x4 = (g.random(4) for g in (g1, g2, g3, g4))
    assert np.array_equal(x1, x2)
    assert not np.array_equal(x1, x3)
    assert not np.array_equal(x1, x4)
