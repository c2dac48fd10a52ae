import math

import numpy as np
import pytest
import torch

from DISTAIN.Misc import ConfigError, ShapeError
from DISTAIN.Objective import (LOSS_PRESETS, LossWeights,
                               expected_zero_prediction_loss, hybrid_loss)


def test_perfect_prediction_and_unit_residual():
    x = torch.randn(2, 4, 4, 4, generator=torch.Generator().manual_seed(0))

    assert float(hybrid_loss(x, x.clone(), LossWeights())) == 0.0
    assert math.isclose(float(hybrid_loss(torch.ones(8), torch.zeros(8),
                                          LossWeights(0.7, 0.3))), 1.0,
                        rel_tol=1e-7)


def test_hybrid_loss_matches_double_loop():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 3))

    sq, ab = 0.0, 0.0
    for i in range(2):
        for j in range(3):
            sq += (a[i, j] - b[i, j])**2
            ab += abs(a[i, j] - b[i, j])
    expected = 0.7*sq/6 + 0.3*ab/6

    loss = hybrid_loss(torch.as_tensor(a), torch.as_tensor(b),
                       LossWeights(0.7, 0.3))
    assert abs(float(loss) - expected) < 1e-12

    mse = float(hybrid_loss(torch.as_tensor(a), torch.as_tensor(b),
                            LossWeights(1.0, 0.0)))
    mae = float(hybrid_loss(torch.as_tensor(a), torch.as_tensor(b),
                            LossWeights(0.0, 1.0)))
    assert abs(mse - sq/6) < 1e-12
    assert abs(mae - ab/6) < 1e-12


def test_symmetry_and_sign():
    gen = torch.Generator().manual_seed(2)
    a = torch.randn(5, 3, generator=gen, dtype=torch.float64)
    b = torch.randn(5, 3, generator=gen, dtype=torch.float64)
    w = LossWeights()

    assert float(hybrid_loss(a, b, w)) == float(hybrid_loss(b, a, w))
    assert float(hybrid_loss(a, b, w)) > 0


def test_l1_subgradient_at_ties_is_zero():
    pred = torch.zeros(4, dtype=torch.float64, requires_grad=True)
    hybrid_loss(torch.zeros(4, dtype=torch.float64), pred,
                LossWeights(0.0, 1.0)).backward()

    assert torch.equal(pred.grad, torch.zeros(4, dtype=torch.float64))


def test_zero_network_expected_loss_monte_carlo():
    w = LossWeights(0.7, 0.3)
    eps = torch.randn(10**6, generator=torch.Generator().manual_seed(3),
                      dtype=torch.float64)

    estimate = float(hybrid_loss(eps, torch.zeros_like(eps), w))
    analytic = expected_zero_prediction_loss(w)

    assert math.isclose(analytic, 0.7 + 0.3*math.sqrt(2/math.pi))
    assert abs(analytic - 0.939) < 1e-3
    assert abs(estimate - analytic) < 0.01*analytic


def test_weights_and_presets():
    assert LossWeights() == LossWeights(0.7, 0.3)
    assert set(LOSS_PRESETS) == {'mse_only', 'l1_only', 'hybrid_91',
                                 'hybrid_73'}
    assert LOSS_PRESETS['hybrid_91'] == LossWeights(0.9, 0.1)

    with pytest.raises(ConfigError):
        LossWeights(-0.1, 1.0)
    with pytest.raises(ConfigError):
        LossWeights(0.0, 0.0)
    with pytest.raises(ShapeError):
        hybrid_loss(torch.zeros(3), torch.zeros(4), LossWeights())
