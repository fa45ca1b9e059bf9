"""Counter-based stream tests."""

import numpy as np
import numpy.testing as npt

from . import rng


def test_same_key_same_draws():
    a = rng.stream_generator(7, rng.TRIAL, 3).standard_normal(16)
    b = rng.stream_generator(7, rng.TRIAL, 3).standard_normal(16)
    npt.assert_array_equal(a, b)


def test_keys_are_independent():
    base = rng.stream_generator(7, rng.TRIAL, 3).standard_normal(8)
    for other in (rng.stream_generator(8, rng.TRIAL, 3),
                  rng.stream_generator(7, rng.TRIAL, 4),
                  rng.stream_generator(7, rng.NOISE, 3)):
        assert not np.array_equal(base, other.standard_normal(8))


def test_stream_ids_are_stable_and_distinct():
    names = [rng.TRIAL, rng.MATRIX, rng.SUBSELECT, rng.SPECTRUM, rng.NOISE, rng.EVENT]
    ids = [rng.stream_id(name) for name in names]
    assert len(set(ids)) == len(ids)
    assert rng.stream_id("trial") == rng.stream_id(rng.TRIAL)


def test_negative_seed_is_masked():
    a = rng.stream_generator(-1, rng.MATRIX).integers(0, 1 << 30, 4)
    b = rng.stream_generator((1 << 64) - 1, rng.MATRIX).integers(0, 1 << 30, 4)
    npt.assert_array_equal(a, b)


def test_as_generator():
    generator = np.random.default_rng(0)
    assert rng.as_generator(generator) is generator
    npt.assert_array_equal(rng.as_generator(5).random(3),
                           rng.stream_generator(5, rng.NOISE).random(3))
