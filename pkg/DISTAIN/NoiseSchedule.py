#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Mon Sep  7 11:40:02 2026

Diffusion timestep discretisation: variance schedules, the closed-form
forward noising process and the ancestral posterior step.
"""
import numpy as np
import torch

from DISTAIN.Misc import RangeError, ShapeError, check_same_shape


class NoiseSchedule(object):
    def __init__(self, betas):
        '''
        Immutable table of per-timestep variances. Timesteps are 0-indexed,
        t = 0, ..., T-1, and alpha_bars[t] includes betas[t].

        Parameters
        ----------
        betas : array_like
            Length-T array of variances, each in (0, 1).

        '''

        betas = np.array(betas, dtype=np.float64)

        if betas.ndim != 1 or len(betas) < 1:
            raise RangeError("'betas' must be a non-empty 1D array.")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise RangeError("Every value of 'betas' must lie in (0, 1).")

        self.T = len(betas)
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bars = np.cumprod(self.alphas)
        self.alpha_bars_prev = np.append(1.0, self.alpha_bars[:-1])
        self.posterior_variance = (betas*(1.0 - self.alpha_bars_prev) /
                                   (1.0 - self.alpha_bars))

        for table in (self.betas, self.alphas, self.alpha_bars,
                      self.alpha_bars_prev, self.posterior_variance):
            table.flags.writeable = False

        return None

    def __len__(self):
        return self.T

    def snr(self, t=None):
        '''
        Signal-to-noise ratio alpha_bar/(1 - alpha_bar) at timestep t, or the
        full table if t is None.
        '''

        snr = self.alpha_bars/(1.0 - self.alpha_bars)
        if t is None:
            return snr

        return snr[t]

    def check_timestep(self, t):
        t_arr = t.detach().cpu().numpy() if torch.is_tensor(t) else \
            np.asarray(t)
        if np.any(t_arr < 0) or np.any(t_arr >= self.T):
            raise RangeError("Timestep outside [0, %d)." % self.T)

        return None

    def respace(self, steps):
        '''
        Schedule restricted to an evenly spaced subsequence of timesteps, with
        betas re-derived so that its alpha_bars match the original ones on
        the subsequence. The subsequence always contains T-1.

        Parameters
        ----------
        steps : int
            Number of sampling steps, 1 <= steps <= T.

        Returns
        -------
        NoiseSchedule
            The respaced schedule (index i corresponds to timesteps[i]).
        timesteps : numpy.ndarray
            Original timestep indices of the subsequence, increasing.

        '''

        if steps < 1 or steps > self.T:
            raise RangeError("'steps' must be in [1, %d]." % self.T)

        if steps == self.T:
            return self, np.arange(self.T)

        if steps == 1:
            timesteps = np.array([self.T - 1])
        else:
            timesteps = np.unique(np.round(
                np.linspace(0, self.T - 1, steps)).astype(np.int64))
        alpha_bars = self.alpha_bars[timesteps]
        prev = np.append(1.0, alpha_bars[:-1])

        return NoiseSchedule(1.0 - alpha_bars/prev), timesteps


def make_scaled_linear(T, beta_start=1e-4, beta_end=0.02):
    '''
    Scaled-linear schedule: linear interpolation in sqrt(beta) followed by
    squaring, so betas[0] = beta_start and betas[T-1] = beta_end.

    Parameters
    ----------
    T : int
        Number of timesteps, T >= 2.
    beta_start : float, optional
        First variance. The default is 1e-4.
    beta_end : float, optional
        Last variance. The default is 0.02.

    Returns
    -------
    NoiseSchedule

    '''

    _check_endpoints(T, beta_start, beta_end)
    ramp = np.arange(T, dtype=np.float64)/(T - 1)
    sqrt_betas = np.sqrt(beta_start) + ramp*(np.sqrt(beta_end) -
                                             np.sqrt(beta_start))

    return NoiseSchedule(sqrt_betas**2)


def make_linear(T, beta_start=1e-4, beta_end=0.02):
    '''
    Plain linear schedule with the same endpoints as make_scaled_linear().
    '''

    _check_endpoints(T, beta_start, beta_end)
    ramp = np.arange(T, dtype=np.float64)/(T - 1)

    return NoiseSchedule(beta_start + ramp*(beta_end - beta_start))


def _check_endpoints(T, beta_start, beta_end):
    if int(T) != T or T < 2:
        raise RangeError("'T' must be an integer >= 2, got %s." % T)
    if not 0 < beta_start < beta_end < 1:
        raise RangeError("Need 0 < beta_start < beta_end < 1, got (%g, %g)."
                         % (beta_start, beta_end))

    return None


def _coefficient(table, t, ref):
    '''
    Gather table[t] and shape it to broadcast against 'ref'. A scalar t gives
    a Python float; a 1D t gives one value per leading (batch) entry of ref.
    '''

    if torch.is_tensor(t) and t.ndim > 0:
        values = torch.as_tensor(np.asarray(table), dtype=ref.dtype,
                                 device=ref.device)[t.to(ref.device).long()]
        return values.reshape((-1,) + (1,)*(ref.ndim - 1))

    if isinstance(t, np.ndarray) and t.ndim > 0:
        values = np.asarray(table)[t]
        if torch.is_tensor(ref):
            values = torch.as_tensor(values, dtype=ref.dtype,
                                     device=ref.device)
        return values.reshape((-1,) + (1,)*(ref.ndim - 1))

    return float(table[int(t)])


def forward_diffuse(x0, t, eps, sched):
    '''
    Closed-form forward process,
    x_t = sqrt(alpha_bar_t)*x0 + sqrt(1 - alpha_bar_t)*eps.

    Parameters
    ----------
    x0 : torch.Tensor or numpy.ndarray
        Clean latent.
    t : int or 1D tensor/array
        Timestep, or one timestep per leading batch entry.
    eps : torch.Tensor or numpy.ndarray
        Noise with the shape of x0.
    sched : NoiseSchedule
        Variance schedule.

    Returns
    -------
    Same type as x0
        The noised latent.

    '''

    check_same_shape(x0, eps, 'x0', 'eps')
    sched.check_timestep(t)

    signal = _coefficient(np.sqrt(sched.alpha_bars), t, x0)
    noise = _coefficient(np.sqrt(1.0 - sched.alpha_bars), t, x0)

    return signal*x0 + noise*eps


def posterior_step(x_t, eps_pred, t, sched, noise=None):
    '''
    DDPM ancestral step from timestep t to t-1. The mean is
    (x_t - beta_t/sqrt(1 - alpha_bar_t)*eps_pred)/sqrt(alpha_t) and the
    variance is the posterior variance beta_tilde_t. At t = 0 the mean is
    returned and 'noise' is ignored.

    Parameters
    ----------
    x_t : torch.Tensor or numpy.ndarray
        Current latent.
    eps_pred : torch.Tensor or numpy.ndarray
        Predicted noise, same shape as x_t.
    t : int
        Current timestep.
    sched : NoiseSchedule
        Variance schedule.
    noise : torch.Tensor or numpy.ndarray, optional
        Standard normal draw with the shape of x_t. Required when t > 0.

    Returns
    -------
    Same type as x_t
        Latent at timestep t-1 (the final estimate when t = 0).

    '''

    check_same_shape(x_t, eps_pred, 'x_t', 'eps_pred')
    sched.check_timestep(t)
    t = int(t)

    eps_coef = float(sched.betas[t]/np.sqrt(1.0 - sched.alpha_bars[t]))
    mean = (x_t - eps_coef*eps_pred)/float(np.sqrt(sched.alphas[t]))

    if t == 0:
        return mean

    if noise is None:
        raise ShapeError("'noise' is required for t > 0.")
    check_same_shape(x_t, noise, 'x_t', 'noise')

    return mean + float(np.sqrt(sched.posterior_variance[t]))*noise
