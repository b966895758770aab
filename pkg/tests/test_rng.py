"""Keyed substream determinism and separation."""

import numpy as np

from contregime.rng import Role, World, substream


def test_same_key_reproduces_draws():
    a = substream(7, World.OBSERVED, 2, Role.TREATMENT).random(8)
    b = substream(7, World.OBSERVED, 2, Role.TREATMENT).random(8)
    assert np.array_equal(a, b)


def test_prefix_stable_under_longer_draws():
    a = substream(7, World.OBSERVED, 2, Role.TREATMENT).random(4)
    b = substream(7, World.OBSERVED, 2, Role.TREATMENT).random(9)
    assert np.array_equal(a, b[:4])


def test_distinct_keys_give_distinct_streams():
    base = substream(7, World.OBSERVED, 2, Role.TREATMENT).random(64)
    variants = (
        (8, World.OBSERVED, 2, Role.TREATMENT),
        (7, World.COUNTERFACTUAL, 2, Role.TREATMENT),
        (7, World.OBSERVED, 3, Role.TREATMENT),
        (7, World.OBSERVED, 2, Role.CENSOR),
        (7, World.OBSERVED, 2, Role.TRANSITION),
    )
    for args in variants:
        assert not np.array_equal(base, substream(*args).random(64))
