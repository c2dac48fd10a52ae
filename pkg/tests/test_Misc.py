import os

import numpy as np
import pandas as pd
import pytest
import torch

from DISTAIN.Misc import (ConfigError, DataError, CheckpointError,
                          DistainError, ShapeError, check_same_shape,
                          dab_intensity, high_frequency_energy,
                          image_from_uint8, image_to_uint8, plot_loss_curve,
                          plot_translations, rgb_to_luma, stable_seed,
                          to_8bit_range, white_fraction)


def test_exception_hierarchy():
    assert issubclass(ShapeError, ValueError)
    assert issubclass(ConfigError, DistainError)
    assert issubclass(CheckpointError, DataError)
    assert not issubclass(DataError, ValueError)

    check_same_shape(np.zeros(3), torch.zeros(3))
    with pytest.raises(ShapeError):
        check_same_shape(np.zeros(3), np.zeros(4), 'x', 'y')


def test_pixel_conversions():
    img = np.array([[[-1.0, 0.0, 1.0]]])

    assert image_to_uint8(img).tolist() == [[[0, 128, 255]]]
    assert np.allclose(image_from_uint8(np.array([0, 255])), [-1, 1])
    assert np.allclose(to_8bit_range(img), [[[0, 127.5, 255]]])
    assert np.allclose(to_8bit_range(np.array([2.0])), [255])


def test_luma_and_white_fraction():
    img = np.ones((4, 4, 3))
    img[:2] = -1.0

    assert np.allclose(rgb_to_luma(img)[0], -1.0)
    assert rgb_to_luma(img[..., 0]).shape == (4, 4)
    assert white_fraction(img) == 0.5


def test_stain_and_texture_measures():
    white = np.ones((16, 16, 3))
    brown = np.tile(np.array([0.2, -0.3, -0.7]), (16, 16, 1))

    assert dab_intensity(brown) > dab_intensity(white)
    assert high_frequency_energy(white) == 0.0

    rng = np.random.default_rng(0)
    assert high_frequency_energy(rng.uniform(-1, 1, (16, 16, 3))) > 0


def test_stable_seed():
    assert stable_seed(0, 'a.png') == stable_seed(0, 'a.png')
    assert stable_seed(0, 'a.png') != stable_seed(0, 'b.png')
    assert stable_seed(1, 'a.png') == (stable_seed(0, 'a.png') + 1) % 2**31
    assert 0 <= stable_seed(12345, 'x') < 2**31


def test_plots(tmp_path):
    rng = np.random.default_rng(1)
    imgs = [rng.uniform(-1, 1, (8, 8, 3)) for _ in range(2)]

    path = os.path.join(tmp_path, 'pairs.png')
    fig = plot_translations(imgs, imgs, imgs, titles=['a', 'b'],
                            filename=path)
    assert os.path.exists(path)
    assert len(fig.axes) == 6

    path = os.path.join(tmp_path, 'loss.png')
    plot_loss_curve(pd.DataFrame({'step': [1, 2, 3],
                                  'loss': [1.0, 0.5, 0.4]}), path)
    assert os.path.exists(path)
