#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Thu Sep 10 15:20:36 2026

Hybrid MSE + L1 objective on the noise prediction residual.
"""
import math
from dataclasses import dataclass

import torch

from DISTAIN.Misc import ConfigError, check_same_shape


@dataclass
class LossWeights:
    lambda_mse: float = 0.7
    lambda_l1: float = 0.3

    def __post_init__(self):
        if self.lambda_mse < 0 or self.lambda_l1 < 0:
            raise ConfigError("Loss weights must be non-negative, got "
                              "(%g, %g)." % (self.lambda_mse, self.lambda_l1))
        if self.lambda_mse + self.lambda_l1 <= 0:
            raise ConfigError("At least one loss weight must be positive.")


LOSS_PRESETS = {'mse_only': LossWeights(1.0, 0.0),
                'l1_only': LossWeights(0.0, 1.0),
                'hybrid_91': LossWeights(0.9, 0.1),
                'hybrid_73': LossWeights(0.7, 0.3)}


def loss_components(eps_true, eps_pred):
    '''
    Mean squared and mean absolute residual, each averaged over all
    elements.

    Returns
    -------
    mse, l1 : torch.Tensor
        Scalar tensors.

    '''

    check_same_shape(eps_true, eps_pred, 'eps_true', 'eps_pred')
    residual = eps_true - eps_pred

    # d|r|/dr at r = 0 is 0 (torch.sign(0) = 0).
    return torch.mean(residual**2), torch.mean(torch.abs(residual))


def hybrid_loss(eps_true, eps_pred, w):
    '''
    w.lambda_mse*mean((eps_true - eps_pred)^2) +
    w.lambda_l1*mean(|eps_true - eps_pred|).

    Parameters
    ----------
    eps_true : torch.Tensor
        Noise added by the forward process.
    eps_pred : torch.Tensor
        Denoiser prediction, same shape.
    w : LossWeights
        Term weights.

    Returns
    -------
    torch.Tensor
        Scalar loss.

    '''

    mse, l1 = loss_components(eps_true, eps_pred)

    return w.lambda_mse*mse + w.lambda_l1*l1


def expected_zero_prediction_loss(w):
    '''
    Expected loss of a network that always predicts zero, on standard normal
    noise: lambda_mse*E[e^2] + lambda_l1*E[|e|] = lambda_mse +
    lambda_l1*sqrt(2/pi).
    '''

    return w.lambda_mse + w.lambda_l1*math.sqrt(2.0/math.pi)
