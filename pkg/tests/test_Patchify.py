import numpy as np
import pytest
import torch

from DISTAIN.Misc import ShapeError
from DISTAIN.Patchify import get_2d_sincos_pos_embed, patchify, unpatchify


def test_patchify_shape_and_layout():
    z = torch.arange(2*4*4*4, dtype=torch.float32).reshape(2, 4, 4, 4)
    tokens = patchify(z, 2)

    assert tokens.shape == (2, 4, 16)
    # Second token is the top-right patch, laid out (py, px, channel).
    assert torch.equal(tokens[0, 1], z[0, 0:2, 2:4, :].reshape(-1))


def test_unpatchify_round_trip_is_exact():
    z = torch.randn(3, 8, 6, 5, generator=torch.Generator().manual_seed(0))

    assert torch.equal(unpatchify(patchify(z, 2), 2, (4, 3), 5), z)


def test_patchify_errors():
    with pytest.raises(ShapeError):
        patchify(torch.zeros(1, 5, 4, 4), 2)
    with pytest.raises(ShapeError):
        unpatchify(torch.zeros(1, 4, 16), 2, (3, 2), 4)


def test_sincos_positions():
    pos = get_2d_sincos_pos_embed(16, 4, 3)

    assert pos.shape == (12, 16)
    assert len(np.unique(pos.round(12), axis=0)) == 12
    # Token (r, c) encodes the row in the first half and the column in the
    # second half.
    assert np.array_equal(pos[1, :8], pos[2, :8])
    assert np.array_equal(pos[0, 8:], pos[3, 8:])

    with pytest.raises(ShapeError):
        get_2d_sincos_pos_embed(10, 2, 2)
