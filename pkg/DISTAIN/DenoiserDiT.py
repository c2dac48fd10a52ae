#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Thu Sep 10 09:48:55 2026

The dual-stream diffusion transformer that predicts the noise in a latent.
Tokens are modulated by adaptive layer norm from the timestep and semantic
embeddings, and attend to the spatial condition tokens through
cross-attention.
"""
import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from DISTAIN.Conditioning import SpatialConditioner
from DISTAIN.Misc import ConfigError, ShapeError
from DISTAIN.Patchify import patchify, unpatchify, get_2d_sincos_pos_embed


CONDITIONING_MODES = ('dual_cross_attn', 'dual_concat', 'semantic_only',
                      'spatial_only')


@dataclass
class DiTConfig:
    patch_size: int = 2
    hidden_dim: int = 256
    depth: int = 6
    num_heads: int = 4
    d_sem: int = 128
    latent_channels: int = 4
    latent_size: int = 8
    mlp_ratio: float = 4.0
    conditioning_mode: str = 'dual_cross_attn'
    cross_attn_every: int = 1
    frequency_embedding_size: int = 256

    def __post_init__(self):
        if self.patch_size < 1 or self.depth < 1 or self.num_heads < 1:
            raise ConfigError("'patch_size', 'depth' and 'num_heads' must be "
                              ">= 1.")
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError("'hidden_dim' (%d) must be divisible by "
                              "'num_heads' (%d)."
                              % (self.hidden_dim, self.num_heads))
        if self.hidden_dim % 4 != 0:
            raise ConfigError("'hidden_dim' must be divisible by 4, got %d."
                              % self.hidden_dim)
        if self.latent_size % self.patch_size != 0:
            raise ConfigError("'latent_size' (%d) must be divisible by "
                              "'patch_size' (%d)."
                              % (self.latent_size, self.patch_size))
        if self.conditioning_mode not in CONDITIONING_MODES:
            raise ConfigError("Unknown conditioning mode '%s'. Allowed: %s."
                              % (self.conditioning_mode,
                                 ', '.join(CONDITIONING_MODES)))
        if self.cross_attn_every < 1:
            raise ConfigError("'cross_attn_every' must be >= 1.")
        if self.d_sem < 1 or self.latent_channels < 1:
            raise ConfigError("'d_sem' and 'latent_channels' must be >= 1.")

    @property
    def num_tokens(self):
        return (self.latent_size//self.patch_size)**2

    @property
    def uses_cross_attention(self):
        return self.conditioning_mode in ('dual_cross_attn', 'spatial_only')

    @property
    def uses_semantic(self):
        return self.conditioning_mode != 'spatial_only'


def dit_b2(**kwargs):
    '''
    DiT-B/2 shaped configuration (hidden 768, depth 12, 12 heads, p = 2)
    with a 1536-wide semantic embedding.
    '''

    settings = dict(patch_size=2, hidden_dim=768, depth=12, num_heads=12,
                    d_sem=1536)
    settings.update(kwargs)

    return DiTConfig(**settings)


def layer_norm(x):
    return F.layer_norm(x, x.shape[-1:], eps=1e-6)


def ada_ln_modulate(tokens, gamma, beta):
    '''
    gamma*LN(tokens) + beta, with an affine-free layer norm over the last
    axis.

    Parameters
    ----------
    tokens : torch.Tensor
        Tokens of shape (B, N, D).
    gamma & beta : torch.Tensor
        Per-dimension scale and shift, (B, D) or (D,).

    Returns
    -------
    torch.Tensor
        Modulated tokens (B, N, D).

    '''

    D = tokens.shape[-1]
    if gamma.shape[-1] != D or beta.shape[-1] != D:
        raise ShapeError("Modulation width (%d, %d) does not match token "
                         "width %d." % (gamma.shape[-1], beta.shape[-1], D))
    if gamma.ndim == 2:
        gamma = gamma.unsqueeze(1)
    if beta.ndim == 2:
        beta = beta.unsqueeze(1)

    return gamma*layer_norm(tokens) + beta


class AdaLNModulation(nn.Module):
    def __init__(self, cond_dim, hidden_dim, n_sublayers):
        '''
        Regresses a (shift, scale, gate) triple per sublayer from the
        combined condition. Zero-initialised, so every sublayer starts as
        gamma = 1, beta = 0 with a closed gate.
        '''

        super().__init__()
        self.n_sublayers = n_sublayers
        self.linear = nn.Linear(cond_dim, 3*n_sublayers*hidden_dim)
        nn.init.zeros_(self.linear.weight)
        nn.init.zeros_(self.linear.bias)

        return None

    def forward(self, c):
        chunks = self.linear(F.silu(c)).chunk(3*self.n_sublayers, dim=-1)

        return [chunks[3*i:3*i + 3] for i in range(self.n_sublayers)]


class Attention(nn.Module):
    def __init__(self, dim, num_heads, context_dim=None):
        '''
        Multi-head scaled dot-product attention. Used as self-attention when
        called without a context and as cross-attention otherwise.

        Parameters
        ----------
        dim : int
            Query (and output) width.
        num_heads : int
            Number of heads; dim must be divisible by it.
        context_dim : int, optional
            Width of the key/value tokens. The default is dim.

        '''

        super().__init__()
        if dim % num_heads != 0:
            raise ShapeError("'dim' (%d) must be divisible by 'num_heads' "
                             "(%d)." % (dim, num_heads))
        context_dim = dim if context_dim is None else context_dim

        self.num_heads = num_heads
        self.head_dim = dim//num_heads
        self.scale = self.head_dim**-0.5

        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(context_dim, dim)
        self.v = nn.Linear(context_dim, dim)
        self.proj = nn.Linear(dim, dim)

        return None

    def _heads(self, x):
        B, N, _ = x.shape
        return x.reshape(B, N, self.num_heads, self.head_dim).transpose(1, 2)

    def forward(self, x, context=None, return_weights=False):
        context = x if context is None else context
        B, N, D = x.shape

        q = self._heads(self.q(x))
        k = self._heads(self.k(context))
        v = self._heads(self.v(context))

        weights = ((q @ k.transpose(-2, -1))*self.scale).softmax(dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(B, N, D)
        out = self.proj(out)

        if return_weights:
            return out, weights

        return out


def cross_attend(queries, spatial_tokens, attn):
    '''
    Cross-attention of the latent tokens (queries) over the spatial condition
    tokens (keys and values). The residual is added by the caller.
    '''

    if spatial_tokens.shape[-1] != attn.k.in_features:
        raise ShapeError("Spatial tokens have width %d, attention expects %d."
                         % (spatial_tokens.shape[-1], attn.k.in_features))
    if spatial_tokens.shape[0] != queries.shape[0]:
        raise ShapeError("Batch sizes of queries (%d) and spatial tokens (%d) "
                         "differ." % (queries.shape[0],
                                      spatial_tokens.shape[0]))

    return attn(queries, spatial_tokens)


class FeedForward(nn.Sequential):
    def __init__(self, dim, mlp_ratio=4.0):
        hidden = int(dim*mlp_ratio)
        super().__init__(nn.Linear(dim, hidden), nn.GELU(approximate='tanh'),
                         nn.Linear(hidden, dim))


class TimestepEmbedder(nn.Module):
    def __init__(self, hidden_dim, frequency_embedding_size=256):
        '''
        Sinusoidal frequency embedding of the timestep followed by a
        two-layer network.
        '''

        super().__init__()
        self.frequency_embedding_size = frequency_embedding_size
        self.mlp = nn.Sequential(
            nn.Linear(frequency_embedding_size, hidden_dim), nn.SiLU(),
            nn.Linear(hidden_dim, hidden_dim))

        return None

    @staticmethod
    def timestep_embedding(t, dim, dtype=torch.float32, max_period=10000):
        half = dim//2
        steps = torch.arange(half, dtype=dtype, device=t.device)
        freqs = torch.exp(-math.log(max_period)*steps/half)
        args = t[:, None].to(dtype)*freqs[None]
        embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
        if dim % 2:
            embedding = torch.cat([embedding, torch.zeros_like(args[:, :1])],
                                  dim=-1)

        return embedding

    def forward(self, t):
        dtype = self.mlp[0].weight.dtype
        freq = self.timestep_embedding(t, self.frequency_embedding_size, dtype)

        return self.mlp(freq)


class DiTBlock(nn.Module):
    def __init__(self, hidden_dim, num_heads, mlp_ratio=4.0, cross=True):
        '''
        adaLN -> self-attention -> gated residual, adaLN -> cross-attention
        over the spatial tokens -> gated residual (if 'cross'), adaLN ->
        feed-forward -> gated residual.
        '''

        super().__init__()
        self.attn = Attention(hidden_dim, num_heads)
        self.cross_attn = Attention(hidden_dim, num_heads, hidden_dim) \
            if cross else None
        self.mlp = FeedForward(hidden_dim, mlp_ratio)
        self.adaLN_modulation = AdaLNModulation(hidden_dim, hidden_dim,
                                                3 if cross else 2)

        return None

    def forward(self, x, c, context=None):
        mods = self.adaLN_modulation(c)

        shift, scale, gate = mods[0]
        x = x + gate.unsqueeze(1)*self.attn(
            ada_ln_modulate(x, 1 + scale, shift))

        if self.cross_attn is not None:
            shift, scale, gate = mods[1]
            x = x + gate.unsqueeze(1)*cross_attend(
                ada_ln_modulate(x, 1 + scale, shift), context, self.cross_attn)

        shift, scale, gate = mods[-1]
        x = x + gate.unsqueeze(1)*self.mlp(
            ada_ln_modulate(x, 1 + scale, shift))

        return x


class FinalLayer(nn.Module):
    def __init__(self, hidden_dim, patch_size, out_channels):
        super().__init__()
        self.adaLN_modulation = nn.Linear(hidden_dim, 2*hidden_dim)
        self.linear = nn.Linear(hidden_dim, patch_size*patch_size*out_channels)

        for layer in (self.adaLN_modulation, self.linear):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

        return None

    def forward(self, x, c):
        shift, scale = self.adaLN_modulation(F.silu(c)).chunk(2, dim=-1)

        return self.linear(ada_ln_modulate(x, 1 + scale, shift))


class DualStreamDiT(nn.Module):
    def __init__(self, config):
        '''
        Noise predictor for channel-last latents (B, h, w, C).

        Parameters
        ----------
        config : DiTConfig
            Architecture. 'conditioning_mode' selects how the H&E image
            enters: 'dual_cross_attn' (semantic adaLN + spatial
            cross-attention), 'dual_concat' (semantic adaLN + the H&E latent
            concatenated onto the input channels), 'semantic_only' or
            'spatial_only'.

        '''

        super().__init__()
        self.config = config
        p = config.patch_size
        D = config.hidden_dim
        C = config.latent_channels
        grid = config.latent_size//p

        in_channels = 2*C if config.conditioning_mode == 'dual_concat' else C
        self.x_embedder = nn.Linear(p*p*in_channels, D)
        pos = get_2d_sincos_pos_embed(D, grid, grid)
        self.register_buffer('pos_embed',
                             torch.as_tensor(pos, dtype=torch.float32)[None])

        self.t_embedder = TimestepEmbedder(D, config.frequency_embedding_size)
        self.sem_embedder = nn.Linear(config.d_sem, D) \
            if config.uses_semantic else None
        self.conditioner = SpatialConditioner(p, C, config.latent_size, D,
                                              config.d_sem)

        self.blocks = nn.ModuleList([
            DiTBlock(D, config.num_heads, config.mlp_ratio,
                     cross=(config.uses_cross_attention and
                            i % config.cross_attn_every == 0))
            for i in range(config.depth)])
        self.final_layer = FinalLayer(D, p, C)

        self.initialize_weights()

        return None

    def initialize_weights(self):
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)

        for layer in (self.t_embedder.mlp[0], self.t_embedder.mlp[2]):
            nn.init.normal_(layer.weight, std=0.02)

        for block in self.blocks:
            nn.init.zeros_(block.adaLN_modulation.linear.weight)
            nn.init.zeros_(block.adaLN_modulation.linear.bias)
        for layer in (self.final_layer.adaLN_modulation,
                      self.final_layer.linear):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

        return None

    def positions(self, grid_h, grid_w):
        if self.pos_embed.shape[1] == grid_h*grid_w and grid_h == grid_w:
            return self.pos_embed
        pos = get_2d_sincos_pos_embed(self.config.hidden_dim, grid_h, grid_w)

        return torch.as_tensor(pos, dtype=self.pos_embed.dtype,
                               device=self.pos_embed.device)[None]

    def forward(self, z_t, t, bundle):
        '''
        Predict the noise in z_t.

        Parameters
        ----------
        z_t : torch.Tensor
            Noised scaled latents (B, h, w, C).
        t : int or torch.Tensor
            Timestep, or one per batch entry.
        bundle : ConditionBundle
            Conditions for the batch.

        Returns
        -------
        torch.Tensor
            Noise prediction with the shape of z_t.

        '''

        cfg = self.config
        p = cfg.patch_size
        if z_t.ndim != 4 or z_t.shape[-1] != cfg.latent_channels:
            raise ShapeError("Expected latents (B, h, w, %d), got %s."
                             % (cfg.latent_channels, tuple(z_t.shape)))
        B, h, w, C = z_t.shape

        x = z_t
        if cfg.conditioning_mode == 'dual_concat':
            if bundle.spatial_map is None:
                raise ShapeError("Concatenation conditioning needs the "
                                 "bundle's 'spatial_map'.")
            x = torch.cat([z_t, bundle.spatial_map.to(z_t.dtype)], dim=-1)

        tokens = self.x_embedder(patchify(x, p)) + self.positions(h//p, w//p)

        t = torch.as_tensor(t, device=z_t.device)
        if t.ndim == 0:
            t = t.expand(B)
        c = self.t_embedder(t)
        if self.sem_embedder is not None:
            c = c + self.sem_embedder(bundle.c_sem.to(c.dtype))

        context = bundle.c_spatial.to(tokens.dtype) \
            if cfg.uses_cross_attention else None
        for block in self.blocks:
            tokens = block(tokens, c, context)

        out = self.final_layer(tokens, c)

        return unpatchify(out, p, (h//p, w//p), C)


def make_denoiser(config, seed=0):
    '''
    DualStreamDiT with weights initialised from 'seed'.
    '''

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return DualStreamDiT(config)


def denoise(model, z_t, t, bundle):
    return model(z_t, t, bundle)


class ExponentialMovingAverage(object):
    def __init__(self, model, decay=0.999):
        '''
        Shadow copy of a model's parameters, updated as
        shadow = decay*shadow + (1 - decay)*param after each optimiser step.
        '''

        if not 0 < decay < 1:
            raise ConfigError("EMA decay must lie in (0, 1), got %g." % decay)

        self.decay = decay
        self.shadow = {name: p.detach().clone()
                       for name, p in model.named_parameters()}
        self.backup = None

        return None

    def update(self, model):
        with torch.no_grad():
            for name, p in model.named_parameters():
                self.shadow[name].mul_(self.decay).add_(p.detach(),
                                                        alpha=1 - self.decay)

        return None

    def apply_shadow(self, model):
        '''
        Swap the shadow weights into 'model'; restore() undoes this.
        '''

        self.backup = {name: p.detach().clone()
                       for name, p in model.named_parameters()}
        self.copy_to(model)

        return None

    def restore(self, model):
        if self.backup is None:
            return None
        with torch.no_grad():
            for name, p in model.named_parameters():
                p.copy_(self.backup[name])
        self.backup = None

        return None

    def copy_to(self, model):
        with torch.no_grad():
            for name, p in model.named_parameters():
                p.copy_(self.shadow[name])

        return None

    def state_dict(self):
        return {'ema.' + name: t for name, t in self.shadow.items()}

    def load_state_dict(self, state):
        for name in self.shadow:
            self.shadow[name] = state['ema.' + name].clone()

        return None
