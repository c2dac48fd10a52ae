#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Tue Sep  8 09:05:44 2026

Conversion between channel-last latent maps and token sequences, shared by the
denoiser and the spatial conditioning stream.
"""
import numpy as np

from DISTAIN.Misc import ShapeError


def patchify(z, p):
    '''
    Split a latent map into non-overlapping p x p patches and flatten each
    into a token. Tokens run row-major over the patch grid and each token is
    laid out as (py, px, channel).

    Parameters
    ----------
    z : torch.Tensor
        Latent of shape (B, h, w, C).
    p : int
        Patch size.

    Returns
    -------
    torch.Tensor
        Raw tokens of shape (B, (h/p)*(w/p), p*p*C).

    '''

    B, h, w, C = z.shape
    if h % p != 0 or w % p != 0:
        raise ShapeError("Latent of size %dx%d is not divisible by patch "
                         "size %d." % (h, w, p))

    x = z.reshape(B, h//p, p, w//p, p, C)
    x = x.permute(0, 1, 3, 2, 4, 5)

    return x.reshape(B, (h//p)*(w//p), p*p*C)


def unpatchify(tokens, p, grid, channels):
    '''
    Inverse of patchify().

    Parameters
    ----------
    tokens : torch.Tensor
        Tokens of shape (B, gh*gw, p*p*channels).
    p : int
        Patch size.
    grid : tuple of int
        Patch grid (gh, gw).
    channels : int
        Channels per latent pixel.

    Returns
    -------
    torch.Tensor
        Latent of shape (B, gh*p, gw*p, channels).

    '''

    gh, gw = grid
    B, N, D = tokens.shape
    if N != gh*gw or D != p*p*channels:
        raise ShapeError("Tokens of shape %s do not match grid %s with patch "
                         "%d and %d channels." % (tuple(tokens.shape), grid,
                                                  p, channels))

    x = tokens.reshape(B, gh, gw, p, p, channels)
    x = x.permute(0, 1, 3, 2, 4, 5)

    return x.reshape(B, gh*p, gw*p, channels)


def get_2d_sincos_pos_embed(embed_dim, grid_h, grid_w):
    '''
    Fixed 2D sine-cosine positional encoding. Half of the channels encode the
    row index and half the column index.

    Parameters
    ----------
    embed_dim : int
        Width of each encoding, divisible by 4.
    grid_h & grid_w : int
        Patch grid size.

    Returns
    -------
    numpy.ndarray
        Array of shape (grid_h*grid_w, embed_dim), rows ordered like the
        tokens of patchify().

    '''

    if embed_dim % 4 != 0:
        raise ShapeError("'embed_dim' must be divisible by 4, got %d."
                         % embed_dim)

    rows, cols = np.meshgrid(np.arange(grid_h, dtype=np.float64),
                             np.arange(grid_w, dtype=np.float64),
                             indexing='ij')

    emb_h = _get_1d_sincos_pos_embed(embed_dim//2, rows.reshape(-1))
    emb_w = _get_1d_sincos_pos_embed(embed_dim//2, cols.reshape(-1))

    return np.concatenate([emb_h, emb_w], axis=1)


def _get_1d_sincos_pos_embed(embed_dim, pos):
    omega = np.arange(embed_dim//2, dtype=np.float64)/(embed_dim/2.0)
    omega = 1.0/10000**omega

    out = np.einsum('m,d->md', pos, omega)

    return np.concatenate([np.sin(out), np.cos(out)], axis=1)
