import numpy as np
import pytest
import torch

from DISTAIN.DenoiserDiT import (CONDITIONING_MODES, Attention, DiTConfig,
                                 ExponentialMovingAverage, ada_ln_modulate,
                                 cross_attend, denoise, dit_b2,
                                 make_denoiser)
from DISTAIN.Misc import ConfigError, ShapeError
from DISTAIN.Objective import LossWeights, hybrid_loss
from DISTAIN.RunConfig import load_config


def tiny_dit(**kwargs):
    settings = dict(patch_size=2, hidden_dim=16, depth=1, num_heads=2,
                    d_sem=8, latent_channels=4, latent_size=4,
                    frequency_embedding_size=16)
    settings.update(kwargs)

    return DiTConfig(**settings)


def make_inputs(model, B=2, seed=0, dtype=torch.float32):
    cfg = model.config
    gen = torch.Generator().manual_seed(seed)
    shape = (B, cfg.latent_size, cfg.latent_size, cfg.latent_channels)

    z_t = torch.randn(shape, generator=gen).to(dtype)
    he_latent = torch.randn(shape, generator=gen).to(dtype)
    c_sem = torch.randn(B, cfg.d_sem, generator=gen).to(dtype)
    t = torch.randint(0, 50, (B,), generator=gen)

    return z_t, t, c_sem, he_latent


def test_config_validation():
    with pytest.raises(ConfigError):
        DiTConfig(hidden_dim=30, num_heads=4)
    with pytest.raises(ConfigError):
        DiTConfig(conditioning_mode='concat')
    with pytest.raises(ConfigError):
        DiTConfig(latent_size=7)

    big = dit_b2()
    assert (big.hidden_dim, big.depth, big.num_heads, big.patch_size,
            big.d_sem) == (768, 12, 12, 2, 1536)
    assert DiTConfig().num_tokens == 16


def test_ada_ln_identity_and_pure_shift():
    gen = torch.Generator().manual_seed(0)
    x = torch.randn(2, 5, 8, generator=gen, dtype=torch.float64)
    beta = torch.randn(2, 8, generator=gen, dtype=torch.float64)

    ln = torch.nn.functional.layer_norm(x, (8,), eps=1e-6)
    out = ada_ln_modulate(x, torch.ones(2, 8, dtype=torch.float64),
                          torch.zeros(2, 8, dtype=torch.float64))
    assert torch.equal(out, ln)

    out = ada_ln_modulate(x, torch.zeros(2, 8, dtype=torch.float64), beta)
    assert torch.equal(out, beta[:, None].expand(2, 5, 8))

    with pytest.raises(ShapeError):
        ada_ln_modulate(x, torch.ones(2, 7), torch.zeros(2, 7))


def test_ada_ln_matches_scalar_loop():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 6))
    gamma = rng.normal(size=(2, 6))
    beta = rng.normal(size=(2, 6))

    out = ada_ln_modulate(torch.as_tensor(x), torch.as_tensor(gamma),
                          torch.as_tensor(beta)).numpy()

    for b in range(2):
        for n in range(3):
            mean = sum(x[b, n])/6
            var = sum((v - mean)**2 for v in x[b, n])/6
            for d in range(6):
                expected = gamma[b, d]*(x[b, n, d] - mean) / \
                    np.sqrt(var + 1e-6) + beta[b, d]
                assert abs(out[b, n, d] - expected) < 1e-6


def test_cross_attention_over_a_single_token():
    torch.manual_seed(0)
    attn = Attention(8, 2).double()
    queries = torch.randn(1, 3, 8, dtype=torch.float64)
    token = torch.randn(1, 1, 8, dtype=torch.float64)

    out, weights = attn(queries, token, return_weights=True)
    assert torch.allclose(weights, torch.ones_like(weights))

    expected = attn.proj(attn.v(token))
    assert torch.allclose(out, expected.expand(1, 3, 8), atol=1e-12)

    twice = cross_attend(queries, token.repeat(1, 2, 1), attn)
    assert torch.allclose(twice, out, atol=1e-12)

    with pytest.raises(ShapeError):
        cross_attend(queries, torch.randn(1, 2, 5, dtype=torch.float64), attn)


def test_cross_attention_matches_loop_oracle():
    torch.manual_seed(1)
    heads, dim = 2, 8
    attn = Attention(dim, heads).double()
    q_in = torch.randn(1, 3, dim, dtype=torch.float64)
    kv_in = torch.randn(1, 5, dim, dtype=torch.float64)

    out = cross_attend(q_in, kv_in, attn).detach().numpy()[0]

    with torch.no_grad():
        Q = attn.q(q_in)[0].numpy()
        K = attn.k(kv_in)[0].numpy()
        V = attn.v(kv_in)[0].numpy()
        Wo = attn.proj.weight.numpy()
        bo = attn.proj.bias.numpy()

    hd = dim//heads
    concat = np.zeros((3, dim))
    for h in range(heads):
        cols = slice(h*hd, (h + 1)*hd)
        for i in range(3):
            scores = [float(Q[i, cols] @ K[j, cols])/np.sqrt(hd)
                      for j in range(5)]
            top = max(scores)
            exps = [np.exp(s - top) for s in scores]
            total = sum(exps)
            for j in range(5):
                concat[i, cols] += exps[j]/total*V[j, cols]

    expected = concat @ Wo.T + bo
    assert np.allclose(out, expected, atol=1e-6)


@pytest.mark.parametrize('mode', CONDITIONING_MODES)
def test_output_shape_for_every_mode(mode, randomize):
    for latent_size, patch in ((4, 2), (8, 2), (4, 1)):
        model = make_denoiser(tiny_dit(conditioning_mode=mode,
                                       latent_size=latent_size,
                                       patch_size=patch))
        randomize(model)
        z_t, t, c_sem, he = make_inputs(model)
        bundle = model.conditioner.build(c_sem, he)

        out = denoise(model, z_t, t, bundle)
        assert out.shape == z_t.shape
        assert torch.isfinite(out).all()


def test_output_is_bounded_at_initialisation():
    config = load_config().model

    for seed in range(100):
        model = make_denoiser(config, seed=seed)
        z_t, t, c_sem, he = make_inputs(model, seed=seed)
        out = model(z_t, t, model.conditioner.build(c_sem, he))

        assert out.abs().max() < 10


def test_denoise_is_deterministic_and_needs_valid_latents(randomize):
    model = randomize(make_denoiser(tiny_dit()))
    z_t, t, c_sem, he = make_inputs(model)
    bundle = model.conditioner.build(c_sem, he)

    assert torch.equal(model(z_t, t, bundle), model(z_t, t, bundle))
    assert torch.equal(model(z_t, 7, bundle), model(z_t, torch.tensor([7, 7]),
                                                    bundle))

    with pytest.raises(ShapeError):
        model(z_t[..., :3], t, bundle)


def test_spatial_token_permutation_invariance(randomize):
    model = randomize(make_denoiser(tiny_dit()), seed=3)
    z_t, t, c_sem, he = make_inputs(model)
    bundle = model.conditioner.build(c_sem, he)

    perm = torch.tensor([2, 0, 3, 1])
    shuffled = bundle.select(slice(None))
    shuffled.c_spatial = bundle.c_spatial[:, perm]

    with torch.no_grad():
        assert torch.allclose(model(z_t, t, bundle), model(z_t, t, shuffled),
                              atol=1e-6)


def test_unconditional_path_ignores_source(randomize):
    model = randomize(make_denoiser(tiny_dit(conditioning_mode='dual_concat')),
                      seed=4)
    z_t, t, c_sem, he = make_inputs(model, seed=0)
    _, _, c_sem2, he2 = make_inputs(model, seed=1)

    null1 = model.conditioner.null_bundle(model.conditioner.build(c_sem, he))
    null2 = model.conditioner.null_bundle(model.conditioner.build(c_sem2,
                                                                  he2))

    with torch.no_grad():
        assert torch.equal(model(z_t, t, null1), model(z_t, t, null2))


def test_loss_gradient_matches_finite_differences(randomize):
    model = make_denoiser(tiny_dit()).double()
    randomize(model, seed=5, std=0.3)
    z_t, t, c_sem, he = make_inputs(model, dtype=torch.float64)
    eps = torch.randn(z_t.shape, generator=torch.Generator().manual_seed(9),
                      dtype=torch.float64)
    w = LossWeights(0.7, 0.3)

    def loss_fn():
        bundle = model.conditioner.build(c_sem, he)
        bundle = model.conditioner.apply_cfg_dropout(
            bundle, 0.5, torch.Generator(), force=[True, False])
        return hybrid_loss(eps, model(z_t, t, bundle), w)

    model.zero_grad()
    loss_fn().backward()

    h = 1e-4
    gen = np.random.default_rng(0)
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        picks = gen.choice(flat.numel(), size=min(12, flat.numel()),
                           replace=False)
        grad = torch.zeros_like(p) if p.grad is None else p.grad
        analytic = grad.view(-1)[picks].numpy()
        numeric = np.zeros(len(picks))

        with torch.no_grad():
            for k, idx in enumerate(picks):
                orig = float(flat[idx])
                flat[idx] = orig + h
                up = float(loss_fn())
                flat[idx] = orig - h
                down = float(loss_fn())
                flat[idx] = orig
                numeric[k] = (up - down)/(2*h)

        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        if scale < 1e-10:
            continue
        assert np.linalg.norm(analytic - numeric)/scale < 1e-3, name


def test_exponential_moving_average():
    model = make_denoiser(tiny_dit())
    ema = ExponentialMovingAverage(model, decay=0.9)
    before = {n: p.detach().clone() for n, p in model.named_parameters()}

    with torch.no_grad():
        for p in model.parameters():
            p.add_(1.0)
    ema.update(model)

    for name, p in model.named_parameters():
        assert torch.allclose(ema.shadow[name], before[name] + 0.1, atol=1e-6)

    ema.apply_shadow(model)
    for name, p in model.named_parameters():
        assert torch.equal(p, ema.shadow[name])
    ema.restore(model)
    for name, p in model.named_parameters():
        assert torch.allclose(p, before[name] + 1.0)

    clone = ExponentialMovingAverage(model, decay=0.9)
    clone.load_state_dict(ema.state_dict())
    assert all(torch.equal(clone.shadow[n], ema.shadow[n])
               for n in ema.shadow)

    with pytest.raises(ConfigError):
        ExponentialMovingAverage(model, decay=1.0)
