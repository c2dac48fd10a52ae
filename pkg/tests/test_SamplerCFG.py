import numpy as np
import pytest
import torch

from DISTAIN.Conditioning import RandomProjectionEncoder
from DISTAIN.DenoiserDiT import DiTConfig, make_denoiser
from DISTAIN.LatentCodec import CodecConfig, FixedOrthogonalCodec
from DISTAIN.Misc import ConfigError, ShapeError
from DISTAIN.NoiseSchedule import make_scaled_linear, posterior_step
from DISTAIN.SamplerCFG import (GuidanceConfig, cfg_combine, sample_latents,
                                translate)


def tiny_setup(randomize, latent_size=4, seed=0):
    config = DiTConfig(patch_size=2, hidden_dim=16, depth=1, num_heads=2,
                       d_sem=8, latent_channels=4, latent_size=latent_size,
                       frequency_embedding_size=16)
    model = randomize(make_denoiser(config), seed=seed)
    gen = torch.Generator().manual_seed(seed)
    c_sem = torch.randn(2, 8, generator=gen)
    he = torch.randn(2, latent_size, latent_size, 4, generator=gen)

    return model, model.conditioner.build(c_sem, he)


def count_calls(model):
    calls = []
    handle = model.register_forward_hook(lambda *args: calls.append(1))

    return calls, handle


def test_cfg_combine():
    gen = torch.Generator().manual_seed(0)
    eu = torch.randn(2, 4, 4, 4, generator=gen)
    ec = torch.randn(2, 4, 4, 4, generator=gen)

    assert torch.equal(cfg_combine(eu, ec, 1.0), ec)
    assert torch.equal(cfg_combine(eu, ec, 0.0), eu)
    assert torch.equal(cfg_combine(eu, eu.clone(), 5.0), eu)
    assert torch.allclose(cfg_combine(eu, ec, 3.0), eu + 3*(ec - eu))

    with pytest.raises(ShapeError):
        cfg_combine(eu, ec[..., :3], 2.0)


def test_guidance_config_errors():
    with pytest.raises(ConfigError):
        GuidanceConfig(scale=-1.0)
    with pytest.raises(ConfigError):
        GuidanceConfig(steps=0)
    assert GuidanceConfig().scale == 3.0


def test_unit_scale_matches_conditional_ancestral_loop(randomize):
    model, bundle = tiny_setup(randomize, latent_size=16)
    sched = make_scaled_linear(50)

    out = sample_latents(model, bundle, sched, GuidanceConfig(1.0, seed=11))

    generator = torch.Generator().manual_seed(11)
    z = torch.randn(out.shape, generator=generator)
    with torch.no_grad():
        for t in reversed(range(50)):
            eps = model(z, torch.full((2,), t), bundle)
            noise = torch.randn(z.shape, generator=generator) if t > 0 \
                else None
            z = posterior_step(z, eps, t, sched, noise)

    assert torch.allclose(out, z, atol=1e-5)


def test_network_calls_per_step(randomize):
    model, bundle = tiny_setup(randomize)
    sched = make_scaled_linear(50)
    calls, handle = count_calls(model)

    sample_latents(model, bundle, sched, GuidanceConfig(3.0, steps=10))
    assert len(calls) == 20

    calls.clear()
    sample_latents(model, bundle, sched, GuidanceConfig(1.0, steps=10))
    assert len(calls) == 10

    calls.clear()
    sample_latents(model, bundle, sched, GuidanceConfig(1.0))
    assert len(calls) == 50
    handle.remove()


def test_sampling_is_reproducible_and_keeps_mode(randomize):
    model, bundle = tiny_setup(randomize)
    sched = make_scaled_linear(50)
    g = GuidanceConfig(2.5, seed=3, steps=7)
    model.train()

    a = sample_latents(model, bundle, sched, g)
    b = sample_latents(model, bundle, sched, g)
    c = sample_latents(model, bundle, sched, GuidanceConfig(2.5, seed=4,
                                                            steps=7))

    assert torch.equal(a, b)
    assert not torch.equal(a, c)
    assert model.training


def test_translate_output_range_and_purity(randomize):
    model, _ = tiny_setup(randomize)
    codec = FixedOrthogonalCodec(CodecConfig(compression_factor=4))
    codec.set_scale(0.5)
    encoder = RandomProjectionEncoder(8)
    sched = make_scaled_linear(50)

    rng = np.random.default_rng(0)
    he = torch.as_tensor(rng.uniform(-1, 1, size=(16, 16, 3)),
                         dtype=torch.float32)
    he_copy = he.clone()
    params = [p.detach().clone() for p in model.parameters()]

    out = translate(he, model, codec, sched, GuidanceConfig(3.0, steps=5),
                    encoder)

    assert out.shape == he.shape
    assert torch.isfinite(out).all()
    assert out.min() >= -1 and out.max() <= 1
    assert torch.equal(he, he_copy)
    assert all(torch.equal(a, b) for a, b in zip(params, model.parameters()))

    again = translate(he, model, codec, sched, GuidanceConfig(3.0, steps=5),
                      encoder)
    assert torch.equal(out, again)

    batch = translate(he[None].repeat(2, 1, 1, 1), model, codec, sched,
                      GuidanceConfig(3.0, steps=5), encoder)
    assert batch.shape == (2, 16, 16, 3)
