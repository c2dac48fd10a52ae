#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Mon Sep  7 10:12:31 2026

Code containing miscellaneous functions and the exception types shared by the
rest of the package.
"""
import hashlib
import numpy as np
import scipy.ndimage as ndi
import matplotlib.pyplot as plt
from skimage.color import rgb2hed


# BT.601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class DistainError(Exception):
    pass


class ShapeError(DistainError, ValueError):
    pass


class RangeError(DistainError, ValueError):
    pass


class ConfigError(DistainError, ValueError):
    pass


class DataError(DistainError):
    pass


class CheckpointError(DataError):
    pass


class NumericalError(DistainError):
    pass


def check_same_shape(a, b, name_a='a', name_b='b'):
    '''
    Raise ShapeError if the two arrays/tensors do not share a shape.

    Parameters
    ----------
    a & b : numpy.ndarray or torch.Tensor
        Objects to compare.
    name_a & name_b : str, optional
        Names used in the error message.

    Returns
    -------
    None.

    '''

    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError("'%s' has shape %s but '%s' has shape %s." % (
            name_a, tuple(a.shape), name_b, tuple(b.shape)))

    return None


def image_to_uint8(img):
    '''
    Convert an image in [-1, 1] to 8-bit RGB.

    Parameters
    ----------
    img : numpy.ndarray
        H x W x 3 image with values in [-1, 1].

    Returns
    -------
    numpy.ndarray
        H x W x 3 uint8 image.

    '''

    img = np.clip(np.asarray(img, dtype=np.float64), -1.0, 1.0)
    return np.round((img + 1.0)*127.5).astype(np.uint8)


def image_from_uint8(img):
    '''
    Convert an 8-bit image to floats in [-1, 1].
    '''

    return np.asarray(img, dtype=np.float64)/127.5 - 1.0


def to_8bit_range(img):
    '''
    Map an image from [-1, 1] to the real interval [0, 255] without
    quantisation. This is the domain metrics are evaluated in.
    '''

    return (np.clip(np.asarray(img, dtype=np.float64), -1.0, 1.0) + 1.0)*127.5


def rgb_to_luma(img):
    '''
    Convert an RGB image to single-channel luma using ITU-R BT.601 weights.
    Single-channel input is returned unchanged.

    Parameters
    ----------
    img : numpy.ndarray
        H x W x 3 or H x W image.

    Returns
    -------
    numpy.ndarray
        H x W luma image, in the same units as the input.

    '''

    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img

    return img @ LUMA_WEIGHTS


def white_fraction(img, threshold=0.7):
    '''
    Fraction of pixels whose luma (on the [-1, 1] scale) is at least
    'threshold'.
    '''

    return float(np.mean(rgb_to_luma(img) >= threshold))


def dab_intensity(img):
    '''
    Mean DAB (brown chromogen) concentration of an IHC image, found by colour
    deconvolution into haematoxylin, eosin and DAB.

    Parameters
    ----------
    img : numpy.ndarray
        H x W x 3 image with values in [-1, 1].

    Returns
    -------
    float
        Mean DAB channel value.

    '''

    rgb = (np.clip(np.asarray(img, dtype=np.float64), -1.0, 1.0) + 1.0)/2.0
    return float(np.mean(rgb2hed(rgb)[..., 2]))


def high_frequency_energy(img):
    '''
    Mean Laplacian magnitude of the luma of an image in [-1, 1]. Smooth images
    score low.
    '''

    return float(np.mean(np.abs(ndi.laplace(rgb_to_luma(img)))))


def stable_seed(base_seed, name):
    '''
    Deterministic per-item seed from a global seed and a string, independent
    of the order items are processed in.

    Parameters
    ----------
    base_seed : int
        Global seed.
    name : str
        Name of the item (usually a filename).

    Returns
    -------
    int
        Seed in [0, 2**31).

    '''

    digest = hashlib.sha256(name.encode('utf-8')).digest()
    return (int(base_seed) + int.from_bytes(digest[:8], 'little')) % 2**31


def plot_translations(he_images, generated, truth=None, titles=None,
                      filename=None):
    '''
    Plot rows of H&E input, generated IHC and (optionally) ground-truth IHC.

    Parameters
    ----------
    he_images : list of numpy.ndarray
        Source images in [-1, 1].
    generated : list of numpy.ndarray
        Translated images in [-1, 1].
    truth : list of numpy.ndarray, optional
        Ground-truth images in [-1, 1]. The default is None.
    titles : list of str, optional
        Row labels (e.g. image ids). The default is None.
    filename : str, optional
        If given the figure is saved there instead of being shown.
        The default is None.

    Returns
    -------
    fig : matplotlib.figure.Figure
        The figure.

    '''

    columns = [he_images, generated] + ([truth] if truth is not None else [])
    headers = ['H&E', 'Generated', 'Ground truth'][:len(columns)]
    rows = len(he_images)

    fig, axes = plt.subplots(rows, len(columns), squeeze=False,
                             figsize=[2.2*len(columns), 2.2*rows], dpi=150)

    for i in range(rows):
        for j, col in enumerate(columns):
            ax = axes[i, j]
            ax.imshow(image_to_uint8(col[i]))
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(headers[j])
            if j == 0 and titles is not None:
                ax.set_ylabel(titles[i])

    fig.tight_layout()

    if filename is not None:
        fig.savefig(filename)
        plt.close(fig)

    return fig


def plot_loss_curve(loss_log, filename=None):
    '''
    Plot a training loss log (pandas.DataFrame with 'step' and 'loss').
    '''

    fig = plt.figure(figsize=[5.8, 4.0], dpi=150)
    plt.title("Training Loss")
    plt.xlabel('step')
    plt.ylabel('loss')
    plt.yscale('log')
    plt.plot(loss_log['step'], loss_log['loss'])

    if filename is not None:
        fig.savefig(filename)
        plt.close(fig)

    return fig
