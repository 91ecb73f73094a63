import numpy as np
import pytest

from core.errors import DomainError
from core.rng import RngStream


def test_same_identity_gives_same_draws():
    a = RngStream(7, 3, (1, 2)).generator.standard_normal(5)
    b = RngStream(7, 3, (1, 2)).generator.standard_normal(5)
    np.testing.assert_array_equal(a, b)


def test_stream_id_and_path_separate_streams():
    base = RngStream(7).generator.random(5)
    assert not np.array_equal(base, RngStream(7, 1).generator.random(5))
    assert not np.array_equal(base, RngStream(7).substream(0).generator.random(5))
    assert not np.array_equal(
        RngStream(7).substream(1, 2).generator.random(5),
        RngStream(7).substream(2, 1).generator.random(5),
    )


def test_substream_ignores_parent_usage():
    used = RngStream(11)
    used.generator.random(1000)
    fresh = RngStream(11)
    np.testing.assert_array_equal(
        used.substream(4).generator.random(3),
        fresh.substream(4).generator.random(3),
    )


def test_substream_extends_path():
    child = RngStream(5, 2, (1,)).substream(9, 4)
    assert (child.seed, child.stream_id, child.path) == (5, 2, (1, 9, 4))


@pytest.mark.parametrize('seed', [-1, 2**64])
def test_seed_must_fit_64_bits(seed):
    with pytest.raises(DomainError):
        RngStream(seed)
