#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Fri Sep 11 11:05:43 2026

Reverse-process sampling with classifier-free guidance, and H&E -> IHC
translation built on it.
"""
from dataclasses import dataclass
from typing import Optional

import torch

from DISTAIN.Conditioning import encode_semantic
from DISTAIN.LatentCodec import LatentTensor
from DISTAIN.Misc import ConfigError, check_same_shape
from DISTAIN.NoiseSchedule import posterior_step


@dataclass
class GuidanceConfig:
    scale: float = 3.0
    seed: int = 0
    steps: Optional[int] = None

    def __post_init__(self):
        if self.scale < 0:
            raise ConfigError("Guidance 'scale' must be >= 0, got %g."
                              % self.scale)
        if self.steps is not None and self.steps < 1:
            raise ConfigError("Sampling 'steps' must be >= 1, got %d."
                              % self.steps)


def cfg_combine(eps_uncond, eps_cond, scale):
    '''
    Guided noise prediction eps_uncond + scale*(eps_cond - eps_uncond).
    Scale 1 returns the conditional prediction exactly.
    '''

    check_same_shape(eps_uncond, eps_cond, 'eps_uncond', 'eps_cond')
    if scale == 1:
        return eps_cond

    return eps_uncond + scale*(eps_cond - eps_uncond)


def sample_latents(model, bundle, sched, g, display_progress=False):
    '''
    Ancestral sampling from pure noise to a clean scaled latent.

    Parameters
    ----------
    model : DualStreamDiT
        Denoiser. Its parameters are not modified and its train/eval mode is
        restored on return.
    bundle : ConditionBundle
        Conditions, one per latent to sample.
    sched : NoiseSchedule
        Training schedule; respaced when g.steps < T.
    g : GuidanceConfig
        Guidance scale, seed and step count.
    display_progress : bool, optional
        The default is False.

    Returns
    -------
    torch.Tensor
        Scaled latents (B, h, w, C).

    '''

    cfg = model.config
    param = next(model.parameters())
    B = bundle.batch_size
    shape = (B, cfg.latent_size, cfg.latent_size, cfg.latent_channels)

    steps = sched.T if g.steps is None else g.steps
    respaced, timesteps = sched.respace(steps)

    generator = torch.Generator().manual_seed(int(g.seed))
    z = torch.randn(shape, generator=generator).to(param.device, param.dtype)

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            null = model.conditioner.null_bundle(bundle) if g.scale != 1 \
                else None

            for i in reversed(range(len(timesteps))):
                t = torch.full((B,), int(timesteps[i]), dtype=torch.long,
                               device=param.device)

                if g.scale == 1:
                    eps = model(z, t, bundle)
                else:
                    eps = cfg_combine(model(z, t, null), model(z, t, bundle),
                                      g.scale)

                noise = None
                if i > 0:
                    noise = torch.randn(shape, generator=generator).to(
                        param.device, param.dtype)
                z = posterior_step(z, eps, i, respaced, noise)

                if display_progress and i % 100 == 0:
                    print('sampling t=%d: |z|max=%g' % (timesteps[i],
                                                        z.abs().max()))
    finally:
        model.train(was_training)

    return z


def translate(he_img, model, codec, sched, g, semantic_encoder,
              display_progress=False):
    '''
    Generate the IHC image(s) for H&E image(s).

    Parameters
    ----------
    he_img : torch.Tensor
        H&E image(s) (H, W, 3) or (B, H, W, 3) in [-1, 1]. Not modified.
    model : DualStreamDiT
        Trained denoiser.
    codec : Codec
        Codec with its fitted latent scale.
    sched : NoiseSchedule
        Training schedule.
    g : GuidanceConfig
        Guidance scale, seed and step count.
    semantic_encoder : SemanticEncoder
        Frozen semantic encoder.
    display_progress : bool, optional
        The default is False.

    Returns
    -------
    torch.Tensor
        Generated IHC image(s) in [-1, 1], same shape as he_img.

    '''

    he = torch.as_tensor(he_img)
    batched = he.ndim == 4
    if not batched:
        he = he[None]

    with torch.no_grad():
        c_sem = encode_semantic(he, semantic_encoder)
        latent_map = codec.scale(codec.encode(he)).data
        param = next(model.parameters())
        bundle = model.conditioner.build(c_sem.to(param.dtype),
                                         latent_map.to(param.dtype))

    z = sample_latents(model, bundle, sched, g, display_progress)

    with torch.no_grad():
        out = codec.decode(LatentTensor(z, scale_applied=True))

    return out if batched else out[0]
