#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Mon Sep 14 10:31:08 2026

Image quality measures: MSE/PSNR, SSIM split into its luminance, contrast
and structure terms, and the structural correlation (the structure term on
its own), plus corpus evaluation grouped by HER2 level.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.ndimage as ndi
from skimage.transform import downscale_local_mean

from DISTAIN.Misc import (DataError, RangeError, ShapeError, check_same_shape,
                          rgb_to_luma, to_8bit_range, white_fraction)
from DISTAIN.SyntheticSlides import HER2_LEVELS


# Normalised MS-SSIM scale weights, finest scale first.
MULTISCALE_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])

GROUP_ORDER = list(HER2_LEVELS) + ['unlabeled']
METRIC_COLUMNS = ['mse', 'psnr', 'ssim', 'scm']


@dataclass(frozen=True)
class WindowSpec:
    '''
    Local window and stabilising constants. SSIM uses C1 = (k1*L)^2,
    C2 = (k2*L)^2 and C3 = C2/2; the structural correlation uses
    C = (k_scm*L)^2/2, which is C3 at the default k_scm = k2.
    '''
    kind: str = 'gaussian'
    size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    k_scm: float = 0.03
    data_range: float = 255.0
    color: str = 'luma'

    def __post_init__(self):
        if self.kind not in ('gaussian', 'uniform'):
            raise RangeError("Window 'kind' must be 'gaussian' or 'uniform', "
                             "got '%s'." % self.kind)
        if self.size < 1 or self.size % 2 == 0:
            raise RangeError("Window 'size' must be odd and positive, got %d."
                             % self.size)
        if self.color not in ('luma', 'per_channel'):
            raise RangeError("'color' must be 'luma' or 'per_channel', got "
                             "'%s'." % self.color)
        if self.data_range <= 0:
            raise RangeError("'data_range' must be positive.")

    @property
    def constants(self):
        L = self.data_range
        C1 = (self.k1*L)**2
        C2 = (self.k2*L)**2

        return C1, C2, C2/2.0, (self.k_scm*L)**2/2.0

    def weights(self):
        '''
        Normalised 1D window; the 2D window is its outer product.
        '''

        if self.kind == 'uniform':
            return np.full(self.size, 1.0/self.size)

        x = np.arange(self.size, dtype=np.float64) - self.size//2
        w = np.exp(-x**2/(2.0*self.sigma**2))

        return w/w.sum()


@dataclass
class SsimComponents:
    luminance: object
    contrast: object
    structure: object
    ssim: object


def mse_psnr(y, y_gen, data_range):
    '''
    Mean squared error and PSNR in dB.

    Parameters
    ----------
    y & y_gen : numpy.ndarray
        Images of equal shape.
    data_range : float
        Peak value range, 255 for 8-bit data and 2 for [-1, 1] images.

    Returns
    -------
    mse : float
    psnr : float
        math.inf when mse is 0.

    '''

    check_same_shape(y, y_gen, 'y', 'y_gen')
    if data_range <= 0:
        raise RangeError("'data_range' must be positive, got %g." % data_range)

    diff = np.asarray(y, dtype=np.float64) - \
        np.asarray(y_gen, dtype=np.float64)
    mse = float(np.mean(diff**2))
    if mse == 0:
        return mse, math.inf

    return mse, float(10.0*np.log10(data_range**2/mse))


def _planes(y, window):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        return [y]
    if window.color == 'luma':
        return [rgb_to_luma(y)]

    return [y[..., k] for k in range(y.shape[-1])]


def _filter_valid(img, w):
    half = len(w)//2
    out = ndi.correlate1d(img, w, axis=0, mode='nearest')
    out = ndi.correlate1d(out, w, axis=1, mode='nearest')
    H, W = img.shape

    return out[half:H - half, half:W - half]


def window_statistics(y, y_gen, window):
    '''
    Windowed means, variances and covariance of two single-channel images,
    evaluated at every position where the window fits inside the image.

    Returns
    -------
    mu_y, mu_g, var_y, var_g, cov : numpy.ndarray
        Maps of shape (H - size + 1, W - size + 1). Variances are clamped
        at 0.

    '''

    H, W = y.shape
    if H < window.size or W < window.size:
        raise ShapeError("Image of size %dx%d is smaller than the %dx%d "
                         "window." % (H, W, window.size, window.size))

    w = window.weights()
    # Second moments about the image mean to limit cancellation.
    yc = y - y.mean()
    gc = y_gen - y_gen.mean()

    mu_y = _filter_valid(y, w)
    mu_g = _filter_valid(y_gen, w)
    mu_yc = _filter_valid(yc, w)
    mu_gc = _filter_valid(gc, w)

    var_y = np.maximum(_filter_valid(yc*yc, w) - mu_yc**2, 0.0)
    var_g = np.maximum(_filter_valid(gc*gc, w) - mu_gc**2, 0.0)
    cov = _filter_valid(yc*gc, w) - mu_yc*mu_gc

    return mu_y, mu_g, var_y, var_g, cov


def ssim_decomposed(y, y_gen, window=WindowSpec()):
    '''
    SSIM and its luminance, contrast and structure terms.

    Parameters
    ----------
    y & y_gen : numpy.ndarray
        Images (H, W, 3) or (H, W) in the units of window.data_range.
    window : WindowSpec, optional
        The default is an 11x11 Gaussian window (sigma 1.5) on luma.

    Returns
    -------
    maps : SsimComponents
        Per-window maps (stacked on a last axis in per_channel mode).
    means : SsimComponents
        Means of the maps over all window positions (and channels).

    '''

    check_same_shape(y, y_gen, 'y', 'y_gen')
    C1, C2, C3, _ = window.constants
    terms = {'luminance': [], 'contrast': [], 'structure': [], 'ssim': []}

    for a, b in zip(_planes(y, window), _planes(y_gen, window)):
        mu_y, mu_g, var_y, var_g, cov = window_statistics(a, b, window)
        sd_y, sd_g = np.sqrt(var_y), np.sqrt(var_g)

        lum = (2.0*mu_y*mu_g + C1)/(mu_y**2 + mu_g**2 + C1)
        con = (2.0*sd_y*sd_g + C2)/(var_y + var_g + C2)
        struct = (cov + C3)/(sd_y*sd_g + C3)

        terms['luminance'].append(lum)
        terms['contrast'].append(con)
        terms['structure'].append(struct)
        terms['ssim'].append(lum*con*struct)

    maps = {k: v[0] if len(v) == 1 else np.stack(v, axis=-1)
            for k, v in terms.items()}
    means = {k: float(np.mean(v)) for k, v in maps.items()}

    return SsimComponents(**maps), SsimComponents(**means)


def _scm_single(planes_y, planes_g, window):
    C = window.constants[3]
    values = []
    for a, b in zip(planes_y, planes_g):
        _, _, var_y, var_g, cov = window_statistics(a, b, window)
        values.append((cov + C)/(np.sqrt(var_y*var_g) + C))

    return float(np.mean(values))


def scm(y, y_gen, window=WindowSpec(), multiscale=False):
    '''
    Structural correlation: mean over window positions of
    (cov + C)/(sd_y*sd_g + C), i.e. the SSIM structure term with its own
    constant C. The result lies in [-1, 1].

    Parameters
    ----------
    y & y_gen : numpy.ndarray
        Images (H, W, 3) or (H, W) in the units of window.data_range.
    window : WindowSpec, optional
        The default is WindowSpec().
    multiscale : bool, optional
        Combine the structural correlation over up to 5 dyadic scales (2x2
        local-mean downscaling) with the MS-SSIM weights, as a weighted mean.
        Scales smaller than the window are left out and the remaining
        weights renormalised. The default is False.

    Returns
    -------
    float

    '''

    check_same_shape(y, y_gen, 'y', 'y_gen')
    planes_y = _planes(y, window)
    planes_g = _planes(y_gen, window)

    if not multiscale:
        return _scm_single(planes_y, planes_g, window)

    values, weights = [], []
    for weight in MULTISCALE_WEIGHTS:
        if min(planes_y[0].shape) < window.size:
            break
        values.append(_scm_single(planes_y, planes_g, window))
        weights.append(weight)
        planes_y = [downscale_local_mean(a, (2, 2)) for a in planes_y]
        planes_g = [downscale_local_mean(b, (2, 2)) for b in planes_g]

    if not values:
        raise ShapeError("Image is smaller than the %dx%d window."
                         % (window.size, window.size))

    return float(np.average(values, weights=weights))


def shuffle_window_residuals(y, window=WindowSpec(), rng=None,
                             permutation='random'):
    '''
    Keep the windowed mean map of an image and permute the residuals about
    it inside each window-sized tile, with one permutation for all colour
    channels. Local luminance is kept while local structure is destroyed.

    Parameters
    ----------
    y : numpy.ndarray
        Image (H, W, 3) or (H, W).
    window : WindowSpec, optional
        Window whose weights give the mean map and whose size gives the
        tiles; edge tiles may be smaller. The default is WindowSpec().
    rng : numpy.random.Generator, optional
        Source of the permutations. The default is
        numpy.random.default_rng(0).
    permutation : str, optional
        'random' or 'identity' (no-op). The default is 'random'.

    Returns
    -------
    numpy.ndarray
        The shuffled image.

    '''

    if permutation not in ('random', 'identity'):
        raise RangeError("'permutation' must be 'random' or 'identity'.")

    out = np.array(y, dtype=np.float64, copy=True)
    if permutation == 'identity':
        return out
    rng = np.random.default_rng(0) if rng is None else rng

    w = window.weights()
    mean = ndi.correlate1d(out, w, axis=0, mode='nearest')
    mean = ndi.correlate1d(mean, w, axis=1, mode='nearest')
    residual = out - mean

    H, W = out.shape[:2]
    block = window.size
    for i in range(0, H, block):
        for j in range(0, W, block):
            tile = residual[i:i + block, j:j + block]
            shape = tile.shape
            flat = tile.reshape(shape[0]*shape[1], -1)
            residual[i:i + block, j:j + block] = \
                flat[rng.permutation(len(flat))].reshape(shape)

    return mean + residual


def luminance_bias_demo(y, window=WindowSpec(), rng=None,
                        permutation='random'):
    '''
    SSIM and structural correlation between a bright image and a copy whose
    windowed means are kept and whose residuals are shuffled (see
    shuffle_window_residuals). The SSIM luminance term of such a copy stays
    near 1 whatever happens to the structure.

    Parameters
    ----------
    y : numpy.ndarray
        Image (H, W, 3) in [-1, 1] with at least 30% near-white pixels
        (luma >= 0.7).
    window : WindowSpec, optional
        The default is WindowSpec().
    rng : numpy.random.Generator, optional
        The default is numpy.random.default_rng(0).
    permutation : str, optional
        'random' or 'identity'. The default is 'random'.

    Returns
    -------
    ssim, scm : float
        Scores of the corrupted copy against y, on the 8-bit range.

    '''

    fraction = white_fraction(y)
    if fraction < 0.3:
        raise RangeError("Only %.1f%% of the image is near-white; at least "
                         "30%% is required." % (100*fraction))

    corrupted = shuffle_window_residuals(y, window, rng, permutation)
    a, b = to_8bit_range(y), to_8bit_range(corrupted)

    return ssim_decomposed(a, b, window)[1].ssim, scm(a, b, window)


class MetricReport(object):
    def __init__(self, records, failures=None):
        '''
        Per-image metrics with HER2-level aggregation.

        Parameters
        ----------
        records : pandas.DataFrame
            Columns id, label, mse, psnr, ssim, scm.
        failures : list of (str, str), optional
            (id, reason) of pairs that could not be evaluated.
            The default is None.

        '''

        self.records = records.reset_index(drop=True)
        self.failures = [] if failures is None else list(failures)

        return None

    def __len__(self):
        return len(self.records)

    def group_means(self):
        '''
        Mean of every metric per present label, in 0/1+/2+/3+/unlabeled
        order, followed by an 'overall' row. Column 'n' counts images.
        '''

        rows, index = [], []
        for group in GROUP_ORDER:
            subset = self.records[self.records['label'] == group]
            if len(subset):
                rows.append(self._means(subset))
                index.append(group)
        rows.append(self._means(self.records))
        index.append('overall')

        return pd.DataFrame(rows, index=pd.Index(index, name='label'))

    @staticmethod
    def _means(frame):
        means = {col: float(np.mean(frame[col].to_numpy(dtype=np.float64)))
                 for col in METRIC_COLUMNS}
        means['n'] = len(frame)

        return means

    def to_csv(self, path):
        self.records[['id', 'label'] + METRIC_COLUMNS].to_csv(path,
                                                               index=False)

        return None

    def summary_table(self):
        return self.group_means().to_string(float_format=lambda v: '%.4f' % v)


def evaluate_corpus(pairs, window=WindowSpec(), multiscale=False):
    '''
    Evaluate generated images against ground truth.

    Parameters
    ----------
    pairs : sequence of (id, generated, truth, label)
        Images in [-1, 1]; label one of 0, 1+, 2+, 3+ or 'unlabeled'.
    window : WindowSpec, optional
        The default is WindowSpec().
    multiscale : bool, optional
        Multiscale structural correlation. The default is False.

    Returns
    -------
    MetricReport

    '''

    pairs = list(pairs)
    if not pairs:
        raise DataError("Cannot evaluate an empty corpus.")

    records, failures = [], []
    for image_id, generated, truth, label in pairs:
        try:
            check_same_shape(generated, truth, 'generated', 'truth')
            a, b = to_8bit_range(truth), to_8bit_range(generated)
            mse, psnr = mse_psnr(a, b, window.data_range)
            ssim = ssim_decomposed(a, b, window)[1].ssim
            score = scm(a, b, window, multiscale)
        except ShapeError as err:
            warnings.warn("Skipping '%s': %s" % (image_id, err))
            failures.append((image_id, str(err)))
            continue

        records.append({'id': image_id, 'label': label, 'mse': mse,
                        'psnr': psnr, 'ssim': ssim, 'scm': score})

    if not records:
        raise DataError("None of the %d pairs could be evaluated."
                        % len(pairs))

    return MetricReport(pd.DataFrame(records), failures)
