#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Wed Sep  9 10:02:17 2026

Conditioning of the denoiser on the source H&E image. The semantic stream is
a global embedding from a frozen encoder; the spatial stream is the H&E
latent map turned into tokens. Both streams can be replaced by learned null
conditions for classifier-free guidance.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from DISTAIN.Misc import LUMA_WEIGHTS, RangeError, ShapeError
from DISTAIN.Patchify import patchify, get_2d_sincos_pos_embed


SEMANTIC_KINDS = ('random_projection', 'tiny_vit')


@dataclass
class ConditionBundle:
    '''
    Batched conditions for the denoiser.

    c_sem : (B, d_sem) semantic embeddings.
    c_spatial : (B, N, d_tok) spatial condition tokens.
    sem_dropped & spatial_dropped : (B,) bool flags.
    spatial_map : (B, h, w, C) scaled H&E latent, used by concatenation
        conditioning. Optional.
    '''
    c_sem: torch.Tensor
    c_spatial: torch.Tensor
    sem_dropped: torch.Tensor
    spatial_dropped: torch.Tensor
    spatial_map: Optional[torch.Tensor] = None

    @property
    def batch_size(self):
        return self.c_sem.shape[0]

    def select(self, index):
        '''
        Sub-bundle of the batch entries in 'index'.
        '''

        return ConditionBundle(
            self.c_sem[index], self.c_spatial[index],
            self.sem_dropped[index], self.spatial_dropped[index],
            None if self.spatial_map is None else self.spatial_map[index])


def apply_cfg_dropout(bundle, p_drop, generator, null_sem, null_token,
                      null_latent=None, force=None):
    '''
    Replace both conditions of a random subset of the batch by the null
    conditions. A sample is dropped with probability 'p_drop', and when it is
    its semantic and spatial conditions are dropped together. The input bundle
    is not modified.

    Parameters
    ----------
    bundle : ConditionBundle
        Conditions to drop from.
    p_drop : float
        Drop probability, 0 <= p_drop < 1.
    generator : torch.Generator
        CPU random source. One uniform draw is consumed per sample, also when
        'force' is given.
    null_sem : torch.Tensor
        Null semantic vector, shape (d_sem,).
    null_token : torch.Tensor
        Null spatial token, shape (d_tok,), broadcast to every position.
    null_latent : torch.Tensor, optional
        Null latent pixel, shape (C,), substituted into 'spatial_map'.
        The default is None.
    force : array_like of bool, optional
        Overrides the random decisions. The default is None.

    Returns
    -------
    ConditionBundle
        New bundle with the drops applied.

    '''

    if not 0 <= p_drop < 1:
        raise RangeError("'p_drop' must lie in [0, 1), got %g." % p_drop)

    B = bundle.batch_size
    drop = torch.rand(B, generator=generator) < p_drop
    if force is not None:
        drop = torch.as_tensor(force, dtype=torch.bool).reshape(B)
    drop = drop.to(bundle.c_sem.device)

    null_sem = null_sem.to(bundle.c_sem.dtype).expand_as(bundle.c_sem)
    c_sem = torch.where(drop[:, None], null_sem, bundle.c_sem)
    c_spatial = torch.where(
        drop[:, None, None],
        null_token.to(bundle.c_spatial.dtype).expand_as(bundle.c_spatial),
        bundle.c_spatial)

    spatial_map = bundle.spatial_map
    if spatial_map is not None and null_latent is not None:
        spatial_map = torch.where(
            drop[:, None, None, None],
            null_latent.to(spatial_map.dtype).expand_as(spatial_map),
            spatial_map)

    return ConditionBundle(c_sem, c_spatial, bundle.sem_dropped | drop,
                           bundle.spatial_dropped | drop, spatial_map)


class SpatialConditioner(nn.Module):
    def __init__(self, patch_size, latent_channels, latent_size, token_dim,
                 d_sem):
        '''
        Spatial condition stream and the learned null conditions. Trained
        jointly with the denoiser that owns it.

        Parameters
        ----------
        patch_size : int
            Patch size, shared with the denoiser.
        latent_channels : int
            Channels of the latent map.
        latent_size : int
            Side length of the (square) latent map.
        token_dim : int
            Width of the spatial tokens, divisible by 4.
        d_sem : int
            Width of the semantic embedding.

        '''

        super().__init__()
        self.patch_size = patch_size
        self.latent_channels = latent_channels
        grid = latent_size//patch_size

        self.proj = nn.Linear(patch_size*patch_size*latent_channels, token_dim)
        pos = get_2d_sincos_pos_embed(token_dim, grid, grid)
        self.register_buffer('pos_embed',
                             torch.as_tensor(pos, dtype=torch.float32)[None])

        self.null_sem = nn.Parameter(0.02*torch.randn(d_sem))
        self.null_token = nn.Parameter(0.02*torch.randn(token_dim))
        self.null_latent = nn.Parameter(torch.zeros(latent_channels))

        return None

    def positions(self, grid_h, grid_w):
        if self.pos_embed.shape[1] == grid_h*grid_w and grid_h == grid_w:
            return self.pos_embed
        pos = get_2d_sincos_pos_embed(self.pos_embed.shape[-1], grid_h, grid_w)

        return torch.as_tensor(pos, dtype=self.pos_embed.dtype,
                               device=self.pos_embed.device)[None]

    def tokens(self, latent_map, add_positions=True):
        '''
        Tokens of a scaled latent map (B, h, w, C): patchify, project, add
        positions.
        '''

        p = self.patch_size
        B, h, w, C = latent_map.shape
        if C != self.latent_channels:
            raise ShapeError("Spatial latent has %d channels, expected %d."
                             % (C, self.latent_channels))

        tokens = self.proj(patchify(latent_map.to(self.proj.weight.dtype), p))
        if add_positions:
            tokens = tokens + self.positions(h//p, w//p)

        return tokens

    def build(self, c_sem, latent_map):
        '''
        Undropped bundle from semantic embeddings (B, d_sem) and scaled H&E
        latents (B, h, w, C).
        '''

        B = c_sem.shape[0]
        flags = torch.zeros(B, dtype=torch.bool, device=c_sem.device)

        return ConditionBundle(c_sem, self.tokens(latent_map), flags,
                               flags.clone(), latent_map)

    def null_bundle(self, like):
        '''
        Bundle with every condition replaced by its null value, shaped like
        the bundle 'like'.
        '''

        B = like.batch_size
        drop = torch.ones(B, dtype=torch.bool)

        return apply_cfg_dropout(like, 0.0, torch.Generator(), self.null_sem,
                                 self.null_token, self.null_latent,
                                 force=drop)

    def apply_cfg_dropout(self, bundle, p_drop, generator, force=None):
        return apply_cfg_dropout(bundle, p_drop, generator, self.null_sem,
                                 self.null_token, self.null_latent, force)


def encode_spatial(img, codec, conditioner):
    '''
    Spatial condition tokens of H&E image(s): encode with the diffusion
    codec, apply the latent scale, tokenise.

    Parameters
    ----------
    img : torch.Tensor
        Image(s) (H, W, 3) or (B, H, W, 3) in [-1, 1].
    codec : Codec
        The codec of the diffusion latent path.
    conditioner : SpatialConditioner
        Token projection and positions.

    Returns
    -------
    torch.Tensor
        Tokens of shape (B, (h/p)*(w/p), d_tok), or without the batch axis
        for a single image.

    '''

    with torch.no_grad():
        latent = codec.scale(codec.encode(img))

    z = latent.data
    batched = z.ndim == 4
    tokens = conditioner.tokens(z if batched else z[None])

    return tokens if batched else tokens[0]


class SemanticEncoder(nn.Module):
    '''
    Global image embedding (B, H, W, 3) -> (B, d_sem). Encoders are frozen
    before they are used for conditioning.
    '''

    def __init__(self, d_sem):
        super().__init__()
        self.d_sem = d_sem

    def freeze(self):
        self.eval()
        self.requires_grad_(False)

        return self


class RandomProjectionEncoder(SemanticEncoder):
    def __init__(self, d_sem, seed=0):
        '''
        Fixed random projection of the 8 x 8 average-pooled luma image. The
        projection has N(0, 1/64) entries drawn from 'seed'.
        '''

        super().__init__(d_sem)
        rng = np.random.default_rng(seed)
        matrix = rng.normal(0.0, 1.0/8.0, size=(d_sem, 64))

        self.register_buffer('matrix', torch.as_tensor(matrix,
                                                       dtype=torch.float32))
        self.register_buffer('luma', torch.as_tensor(LUMA_WEIGHTS,
                                                     dtype=torch.float32))
        self.freeze()

        return None

    def pooled(self, img):
        luma = img.to(self.matrix.dtype) @ self.luma
        pooled = F.adaptive_avg_pool2d(luma[:, None], 8)

        return pooled.reshape(len(img), 64)

    def forward(self, img):
        return self.pooled(img) @ self.matrix.T


class TinyViTEncoder(SemanticEncoder):
    def __init__(self, d_sem, image_size, patch_size=8, width=64, depth=2,
                 num_heads=4, num_classes=4):
        '''
        Small vision transformer with a class token and a HER2-level head.
        Fit on class labels with fit(), after which it is frozen and the
        class-token embedding is the semantic condition.
        '''

        super().__init__(d_sem)
        if image_size % patch_size != 0:
            raise ShapeError("Image size %d is not divisible by the encoder "
                             "patch size %d." % (image_size, patch_size))

        grid = image_size//patch_size
        self.patch_size = patch_size

        self.patch_embed = nn.Linear(patch_size*patch_size*3, width)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, width))
        pos = get_2d_sincos_pos_embed(width, grid, grid)
        self.register_buffer('pos_embed',
                             torch.as_tensor(pos, dtype=torch.float32)[None])

        layer = nn.TransformerEncoderLayer(width, num_heads, 2*width,
                                           dropout=0.0, activation='gelu',
                                           batch_first=True, norm_first=True)
        self.blocks = nn.TransformerEncoder(layer, depth,
                                            enable_nested_tensor=False)
        self.norm = nn.LayerNorm(width)
        self.out = nn.Linear(width, d_sem)
        self.head = nn.Linear(d_sem, num_classes)

        return None

    def forward(self, img):
        x = patchify(img.to(self.patch_embed.weight.dtype), self.patch_size)
        x = self.patch_embed(x) + self.pos_embed
        cls = self.cls_token.expand(len(x), -1, -1)
        x = self.blocks(torch.cat([cls, x], dim=1))

        return self.out(self.norm(x[:, 0]))

    def fit(self, images, labels, steps=500, batch_size=32, lr=1e-3, seed=0,
            display_progress=True):
        '''
        Pre-fit on HER2 level classification, then freeze.

        Parameters
        ----------
        images : torch.Tensor
            Images (N, H, W, 3) in [-1, 1].
        labels : array_like of int
            Level indices 0-3; negative entries (unlabeled) are ignored.
        steps : int, optional
            The default is 500.
        batch_size : int, optional
            The default is 32.
        lr : float, optional
            The default is 1e-3.
        seed : int, optional
            Seed of the batch sampler. The default is 0.
        display_progress : bool, optional
            The default is True.

        Returns
        -------
        losses : list of float
            Cross-entropy of every step.

        '''

        labels = torch.as_tensor(labels, dtype=torch.long)
        keep = labels >= 0
        images, labels = torch.as_tensor(images)[keep], labels[keep]
        losses = []

        if len(labels) == 0:
            self.freeze()
            return losses

        generator = torch.Generator().manual_seed(seed)
        optimizer = torch.optim.AdamW(self.parameters(), lr=lr)

        self.train()
        for step in range(steps):
            idx = torch.randint(len(labels), (batch_size,),
                                generator=generator)
            logits = self.head(self(images[idx]))
            loss = F.cross_entropy(logits, labels[idx])

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())

            if display_progress and (step % 100 == 0 or step == steps - 1):
                print('encoder step=%d: loss=%g' % (step, losses[-1]))

        self.freeze()

        return losses


def make_semantic_encoder(kind, d_sem, image_size, seed=0):
    '''
    Semantic encoder selected by the 'conditioning.semantic' config key.
    '''

    if kind == 'random_projection':
        return RandomProjectionEncoder(d_sem, seed=seed)
    if kind == 'tiny_vit':
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return TinyViTEncoder(d_sem, image_size)

    raise RangeError("Unknown semantic encoder '%s'. Allowed: %s."
                     % (kind, ', '.join(SEMANTIC_KINDS)))


def encode_semantic(img, encoder):
    '''
    Semantic embedding of H&E image(s) (H, W, 3) or (B, H, W, 3). No
    gradient reaches the encoder and it is evaluated in eval mode.
    '''

    x = torch.as_tensor(img)
    batched = x.ndim == 4
    if not batched:
        x = x[None]
    if x.shape[-1] != 3:
        raise ShapeError("Expected RGB images, got shape %s."
                         % (tuple(img.shape),))

    was_training = encoder.training
    encoder.eval()
    with torch.no_grad():
        out = encoder(x)
    encoder.train(was_training)

    return out if batched else out[0]

