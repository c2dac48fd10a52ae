#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Tue Sep  8 13:27:10 2026

Codecs mapping pixel images to the normalised latent space the diffusion
model operates in, and back. Two backends are provided: a fixed orthonormal
patch transform with channel truncation, and a small trainable convolutional
autoencoder.
"""
import itertools
from dataclasses import dataclass

import numpy as np
import scipy.fft
import torch
import torch.nn as nn
import torch.nn.functional as F

from DISTAIN.Misc import DataError, RangeError, ShapeError
from DISTAIN.Patchify import patchify, unpatchify


CODEC_KINDS = ('fixed_orthogonal', 'toy_autoencoder')


@dataclass
class CodecConfig:
    kind: str = 'fixed_orthogonal'
    compression_factor: int = 8
    latent_channels: int = 4

    def __post_init__(self):
        if self.kind not in CODEC_KINDS:
            raise RangeError("Unknown codec kind '%s'. Allowed: %s."
                             % (self.kind, ', '.join(CODEC_KINDS)))
        if self.compression_factor not in (2, 4, 8):
            raise RangeError("'compression_factor' must be 2, 4 or 8, got %s."
                             % self.compression_factor)
        if self.latent_channels < 1:
            raise RangeError("'latent_channels' must be >= 1.")


@dataclass
class LatentTensor:
    '''
    Channel-last latent, (B, h, w, C) or (h, w, C). 'scale_applied' records
    whether the data has been multiplied by the codec's latent scale factor.
    '''
    data: torch.Tensor
    scale_applied: bool = False


def _as_image_batch(img, dtype):
    x = torch.as_tensor(img)
    batched = x.ndim == 4
    if not batched:
        x = x.unsqueeze(0)
    if x.ndim != 4 or x.shape[-1] != 3:
        raise ShapeError("Expected an image of shape (H, W, 3) or "
                         "(B, H, W, 3), got %s." % (tuple(img.shape),))

    return x.to(dtype), batched


class Codec(nn.Module):
    def __init__(self, config):
        '''
        Base class for codecs. Subclasses implement _encode() and _decode()
        on batched channel-last tensors.

        Parameters
        ----------
        config : CodecConfig
            Codec settings.

        '''

        super().__init__()
        self.config = config
        self.register_buffer('scale_factor',
                             torch.tensor(1.0, dtype=torch.float64))

        return None

    @property
    def dtype(self):
        raise NotImplementedError

    def set_scale(self, factor):
        if not np.isfinite(factor) or factor <= 0:
            raise RangeError("Latent scale factor must be positive and "
                             "finite, got %g." % factor)
        self.scale_factor.fill_(float(factor))

        return None

    def encode(self, img):
        '''
        Encode images into (unscaled) latents. The encoder is deterministic.

        Parameters
        ----------
        img : torch.Tensor or numpy.ndarray
            Image(s) of shape (H, W, 3) or (B, H, W, 3), values in [-1, 1].

        Returns
        -------
        LatentTensor
            Latent of shape (h, w, C) or (B, h, w, C), h = H/f, w = W/f.

        '''

        x, batched = _as_image_batch(img, self.dtype)
        f = self.config.compression_factor
        H, W = x.shape[1:3]

        if H % f != 0 or W % f != 0:
            raise ShapeError("Image size %dx%d is not divisible by the "
                             "compression factor %d." % (H, W, f))
        if x.numel() and (x.min() < -1 - 1e-6 or x.max() > 1 + 1e-6):
            raise RangeError("Pixel values must lie in [-1, 1].")

        z = self._encode(x)

        return LatentTensor(z if batched else z[0], scale_applied=False)

    def decode(self, latent):
        '''
        Decode latents to images clamped to [-1, 1]. Scaled latents are
        unscaled first.

        Parameters
        ----------
        latent : LatentTensor or torch.Tensor
            Latent of shape (h, w, C) or (B, h, w, C). A bare tensor is
            treated as unscaled.

        Returns
        -------
        torch.Tensor
            Image(s) of shape (h*f, w*f, 3) or (B, h*f, w*f, 3).

        '''

        if not isinstance(latent, LatentTensor):
            latent = LatentTensor(torch.as_tensor(latent))

        z = latent.data.to(self.dtype)
        if latent.scale_applied:
            z = z/float(self.scale_factor)

        batched = z.ndim == 4
        if not batched:
            z = z.unsqueeze(0)
        if z.ndim != 4 or z.shape[-1] != self.config.latent_channels:
            raise ShapeError("Expected a latent with %d channels, got shape "
                             "%s." % (self.config.latent_channels,
                                      tuple(latent.data.shape)))

        img = self._decode(z).clamp(-1.0, 1.0)

        return img if batched else img[0]

    def scale(self, latent):
        if latent.scale_applied:
            return latent

        return LatentTensor(latent.data*float(self.scale_factor), True)

    def unscale(self, latent):
        if not latent.scale_applied:
            return latent

        return LatentTensor(latent.data/float(self.scale_factor), False)

    def _encode(self, x):
        raise NotImplementedError

    def _decode(self, z):
        raise NotImplementedError


def orthonormal_patch_basis(f):
    '''
    Orthonormal basis for f x f x 3 pixel patches: the Kronecker product of
    a 2D DCT-II with an opponent colour transform. Rows are basis vectors in
    the (py, px, channel) patch layout, ordered by spatial frequency, then
    colour, so truncation keeps the coarsest content.

    Parameters
    ----------
    f : int
        Patch size.

    Returns
    -------
    numpy.ndarray
        Orthogonal matrix of shape (3*f*f, 3*f*f).

    '''

    dct = scipy.fft.dct(np.eye(f), axis=0, norm='ortho')
    colour = np.array([[1.0, 1.0, 1.0]/np.sqrt(3.0),
                       [1.0, 0.0, -1.0]/np.sqrt(2.0),
                       [1.0, -2.0, 1.0]/np.sqrt(6.0)])

    full = np.einsum('uy,vx,kc->uvkyxc', dct, dct, colour)
    full = full.reshape(3*f*f, 3*f*f)

    keys = [(u + v, k, u) for u, v, k in
            itertools.product(range(f), range(f), range(3))]
    order = sorted(range(len(keys)), key=keys.__getitem__)

    return full[order]


class FixedOrthogonalCodec(Codec):
    def __init__(self, config):
        '''
        Deterministic linear codec. Each f x f x 3 patch is projected onto
        the first 'latent_channels' rows of orthonormal_patch_basis(f), so
        encoding is an isometry up to channel truncation.
        '''

        super().__init__(config)
        f = config.compression_factor

        if config.latent_channels > 3*f*f:
            raise RangeError("'latent_channels' cannot exceed 3*f*f = %d."
                             % (3*f*f))

        basis = orthonormal_patch_basis(f)[:config.latent_channels]
        self.register_buffer('basis', torch.as_tensor(basis,
                                                      dtype=torch.float32))

        return None

    @property
    def dtype(self):
        return self.basis.dtype

    def gram(self):
        return self.basis @ self.basis.T

    def _encode(self, x):
        f = self.config.compression_factor
        B, H, W, _ = x.shape

        coeffs = patchify(x, f) @ self.basis.T

        return coeffs.reshape(B, H//f, W//f, self.config.latent_channels)

    def _decode(self, z):
        f = self.config.compression_factor
        B, h, w, C = z.shape

        patches = z.reshape(B, h*w, C) @ self.basis

        return unpatchify(patches, f, (h, w), 3)


class ToyAutoencoderCodec(Codec):
    def __init__(self, config, base_channels=32):
        '''
        Small strided convolutional autoencoder. The encoder halves the
        resolution log2(f) times and ends in a 1x1 projection to the latent
        channels; the decoder mirrors it with nearest upsampling.
        '''

        super().__init__(config)
        n_down = int(np.log2(config.compression_factor))
        widths = [base_channels*min(2**i, 4) for i in range(n_down + 1)]

        enc = [nn.Conv2d(3, widths[0], 3, padding=1), nn.SiLU()]
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            enc += [nn.Conv2d(c_in, c_out, 3, stride=2, padding=1), nn.SiLU()]
        enc += [nn.Conv2d(widths[-1], config.latent_channels, 1)]
        self.encoder = nn.Sequential(*enc)

        dec = [nn.Conv2d(config.latent_channels, widths[-1], 3, padding=1),
               nn.SiLU()]
        for c_in, c_out in zip(widths[::-1][:-1], widths[::-1][1:]):
            dec += [nn.Upsample(scale_factor=2, mode='nearest'),
                    nn.Conv2d(c_in, c_out, 3, padding=1), nn.SiLU()]
        dec += [nn.Conv2d(widths[0], 3, 3, padding=1)]
        self.decoder = nn.Sequential(*dec)

        return None

    @property
    def dtype(self):
        return self.encoder[0].weight.dtype

    def _encode(self, x):
        return self.encoder(x.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)

    def _decode(self, z):
        return self.decoder(z.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)

    def reconstruct(self, x):
        return self._decode(self._encode(x))


def make_codec(config, seed=0):
    '''
    Construct the codec described by 'config'. Trainable weights are
    initialised from 'seed'.
    '''

    if config.kind == 'fixed_orthogonal':
        return FixedOrthogonalCodec(config)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return ToyAutoencoderCodec(config)


def fit_autoencoder(codec, images, steps=2000, batch_size=16, lr=1e-3,
                    seed=0, display_progress=True):
    '''
    Train a ToyAutoencoderCodec on pixel reconstruction (MSE).

    Parameters
    ----------
    codec : ToyAutoencoderCodec
        Codec to train in place.
    images : torch.Tensor
        Training images of shape (N, H, W, 3) in [-1, 1].
    steps : int, optional
        Optimiser steps. The default is 2000.
    batch_size : int, optional
        The default is 16.
    lr : float, optional
        Adam learning rate. The default is 1e-3.
    seed : int, optional
        Seed of the batch sampler. The default is 0.
    display_progress : bool, optional
        Print the loss every 100 steps. The default is True.

    Returns
    -------
    losses : list of float
        Loss of every step.

    '''

    images = torch.as_tensor(images).to(codec.dtype)
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(codec.parameters(), lr=lr)
    losses = []

    codec.train()
    for step in range(steps):
        idx = torch.randint(len(images), (batch_size,), generator=generator)
        x = images[idx]

        loss = F.mse_loss(codec.reconstruct(x), x)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())

        if display_progress and (step % 100 == 0 or step == steps - 1):
            print('codec step=%d: loss=%g' % (step, losses[-1]))

    codec.eval()
    codec.requires_grad_(False)

    return losses


def encode_images(codec, images, batch_size=64):
    '''
    Encode a stack of images (N, H, W, 3) into unscaled latents in batches.
    '''

    images = torch.as_tensor(images)
    with torch.no_grad():
        chunks = [codec.encode(images[i:i + batch_size]).data
                  for i in range(0, len(images), batch_size)]

    return torch.cat(chunks)


def fit_latent_scale(latents):
    '''
    Scale factor 1/sigma that normalises latents to unit variance, where
    sigma is the pooled element-wise (population) standard deviation.

    Parameters
    ----------
    latents : iterable of LatentTensor or torch.Tensor
        At least 100 latent tensors. A 4D tensor counts as one latent per
        batch entry.

    Returns
    -------
    float
        The scale factor.

    '''

    if isinstance(latents, LatentTensor) or torch.is_tensor(latents):
        latents = [latents]

    data = [lat.data if isinstance(lat, LatentTensor) else
            torch.as_tensor(lat) for lat in latents]
    count = sum(d.shape[0] if d.ndim == 4 else 1 for d in data)

    if count < 100:
        raise DataError("At least 100 latents are needed to fit the scale, "
                        "got %d." % count)

    pooled = torch.cat([d.reshape(-1).double() for d in data])
    sigma = float(pooled.std(unbiased=False))

    if not np.isfinite(sigma) or sigma == 0:
        raise DataError("Latents have zero or non-finite spread (sigma=%g)."
                        % sigma)

    return 1.0/sigma


def round_trip_psnr(codec, images):
    '''
    Mean PSNR (dB, data range 2) of decode(encode(x)) over the images. This
    is the ceiling the codec puts on any generated image.
    '''

    from DISTAIN.Metrics import mse_psnr

    images = torch.as_tensor(images)
    with torch.no_grad():
        recon = codec.decode(codec.encode(images.to(codec.dtype)))

    values = [mse_psnr(x.numpy(), y.double().numpy(), 2.0)[1]
              for x, y in zip(images.double(), recon)]

    return float(np.mean(values))
