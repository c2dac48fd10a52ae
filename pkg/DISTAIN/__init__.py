#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Mon Sep  7 10:05:12 2026

DISTAIN: virtual H&E to IHC staining with a dual-stream latent diffusion
transformer.
"""
from .NoiseSchedule import NoiseSchedule, make_scaled_linear, make_linear
from .LatentCodec import (CodecConfig, FixedOrthogonalCodec,
                          ToyAutoencoderCodec, make_codec)
from .Conditioning import SpatialConditioner, make_semantic_encoder
from .DenoiserDiT import DiTConfig, DualStreamDiT, make_denoiser
from .Objective import LossWeights, hybrid_loss
from .SamplerCFG import GuidanceConfig, sample_latents, translate
from .Metrics import WindowSpec, evaluate_corpus, scm, ssim_decomposed
from .SyntheticSlides import GeneratorSpec, generate_dataset, load_paired_dir
from .RunConfig import RunConfig, load_config
from .Trainer import Trainer, run_ablation
