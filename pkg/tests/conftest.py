import sys

import matplotlib
import numpy as np
import pytest
import torch

matplotlib.use('Agg')

from DISTAIN.RunConfig import load_config


# 16x16 images, compression factor 4, 4x4x4 latents, 2x2 patches.
TINY_OVERRIDES = ['data.image_size=16', 'data.synthetic.image_size=16',
                  'data.synthetic.compression_factor=4',
                  'data.train_count=50', 'data.test_count=4',
                  'codec.compression_factor=4', 'model.latent_size=4',
                  'model.hidden_dim=16', 'model.depth=1', 'model.num_heads=2',
                  'model.d_sem=8', 'model.frequency_embedding_size=16',
                  'schedule.T=50', 'guidance.steps=10',
                  'optimizer.batch_size=4', 'optimizer.steps=5',
                  'optimizer.lr=1e-3', 'optimizer.log_every=1',
                  'optimizer.checkpoint_every=0']


@pytest.fixture
def tiny_overrides():
    return list(TINY_OVERRIDES)


@pytest.fixture
def tiny_config():
    return load_config(overrides=TINY_OVERRIDES)


def randomize_parameters(model, seed=0, std=0.2):
    '''
    Overwrite every parameter with N(0, std^2) noise so that zero-initialised
    gates and heads do not hide the computation.
    '''

    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(std*torch.randn(p.shape, generator=generator,
                                    dtype=torch.float64).to(p.dtype))

    return model


@pytest.fixture
def randomize():
    return randomize_parameters


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def nonfinite_loss(monkeypatch):
    '''
    Make every training loss NaN. The package re-exports the Trainer class
    under the module's name, so the module is patched through sys.modules.
    '''

    import DISTAIN.Trainer  # noqa: F401
    module = sys.modules['DISTAIN.Trainer']
    monkeypatch.setattr(module, 'hybrid_loss',
                        lambda eps, pred, weights: (pred*float('nan')).mean())

    return module
