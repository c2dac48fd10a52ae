import numpy as np
import pytest
import torch
from skimage.filters import gaussian

from DISTAIN.LatentCodec import (CodecConfig, FixedOrthogonalCodec,
                                 LatentTensor, ToyAutoencoderCodec,
                                 encode_images, fit_autoencoder,
                                 fit_latent_scale, make_codec,
                                 orthonormal_patch_basis, round_trip_psnr)
from DISTAIN.Misc import DataError, RangeError, ShapeError
from DISTAIN.SyntheticSlides import GeneratorSpec, generate_dataset


def smooth_images(count, size, seed=0):
    rng = np.random.default_rng(seed)
    images = [gaussian(rng.normal(size=(size, size, 3)), sigma=3,
                       channel_axis=-1) for _ in range(count)]
    images = [0.9*x/np.abs(x).max() for x in images]

    return torch.as_tensor(np.stack(images), dtype=torch.float32)


def test_codec_config_validation():
    with pytest.raises(RangeError):
        CodecConfig(kind='vae')
    with pytest.raises(RangeError):
        CodecConfig(compression_factor=16)
    with pytest.raises(RangeError):
        CodecConfig(latent_channels=0)


def test_encode_shapes():
    codec = FixedOrthogonalCodec(CodecConfig())

    assert codec.encode(torch.zeros(64, 64, 3)).data.shape == (8, 8, 4)
    assert codec.encode(torch.zeros(512, 512, 3)).data.shape == (64, 64, 4)
    assert codec.encode(torch.zeros(2, 64, 64, 3)).data.shape == \
        (2, 8, 8, 4)

    latent = codec.encode(torch.zeros(64, 64, 3))
    assert latent.scale_applied is False
    assert codec.decode(latent).shape == (64, 64, 3)


def test_encode_errors():
    codec = FixedOrthogonalCodec(CodecConfig())

    with pytest.raises(ShapeError):
        codec.encode(torch.zeros(60, 64, 3))
    with pytest.raises(RangeError):
        codec.encode(torch.full((64, 64, 3), 1.5))
    with pytest.raises(ShapeError):
        codec.encode(torch.zeros(64, 64))
    with pytest.raises(ShapeError):
        codec.decode(torch.zeros(8, 8, 3))


def test_orthonormal_basis_gram():
    basis = orthonormal_patch_basis(4)
    assert np.allclose(basis @ basis.T, np.eye(48), atol=1e-12)

    codec = FixedOrthogonalCodec(CodecConfig(compression_factor=4,
                                             latent_channels=6))
    assert torch.allclose(codec.gram(), torch.eye(6), atol=1e-6)

    # The first row is the mean luminance of the patch.
    assert np.allclose(basis[0], np.full(48, 1/np.sqrt(48)))


def test_full_basis_round_trip_on_smooth_images():
    codec = FixedOrthogonalCodec(CodecConfig(compression_factor=2,
                                             latent_channels=12))
    images = smooth_images(4, 32)

    assert round_trip_psnr(codec, images) > 40.0

    z = codec.encode(images).data
    assert torch.allclose(z.norm(), images.norm(), rtol=1e-5)


def test_truncated_codec_keeps_tile_means():
    rng = np.random.default_rng(1)
    tiles = rng.uniform(-0.9, 0.9, size=(8, 8, 3))
    img = torch.as_tensor(np.repeat(np.repeat(tiles, 8, axis=0), 8, axis=1),
                          dtype=torch.float32)
    codec = FixedOrthogonalCodec(CodecConfig())

    assert torch.allclose(codec.decode(codec.encode(img)), img, atol=1e-5)

    # Truncation only removes energy.
    other = smooth_images(1, 64)[0]
    assert codec.encode(other).data.norm() <= other.norm() + 1e-4


def test_decode_zero_latent_is_constant():
    config = CodecConfig(kind='toy_autoencoder', compression_factor=4)
    codec = make_codec(config, seed=3)
    out1 = codec.decode(torch.zeros(4, 4, 4))
    out2 = codec.decode(torch.zeros(4, 4, 4))

    assert torch.equal(out1, out2)
    assert out1.shape == (16, 16, 3)
    assert out1.min() >= -1 and out1.max() <= 1


def test_scale_unscale_identity():
    codec = FixedOrthogonalCodec(CodecConfig())
    codec.set_scale(0.37)
    latent = codec.encode(smooth_images(2, 64))

    scaled = codec.scale(latent)
    assert scaled.scale_applied
    assert codec.scale(scaled) is scaled
    assert torch.allclose(codec.unscale(scaled).data, latent.data, rtol=1e-6)
    assert torch.allclose(codec.decode(scaled), codec.decode(latent),
                          atol=1e-5)

    with pytest.raises(RangeError):
        codec.set_scale(0.0)


def test_fit_latent_scale():
    gen = torch.Generator().manual_seed(0)
    latents = 2.0*torch.randn(400, 8, 8, 4, generator=gen)

    factor = fit_latent_scale([latents])
    assert abs(factor - 0.5) < 0.01

    scaled = latents.double()*factor
    assert abs(float(scaled.std(unbiased=False)) - 1.0) < 1e-6

    unit = [LatentTensor(torch.randn(8, 8, 4, generator=gen))
            for _ in range(200)]
    assert abs(fit_latent_scale(unit) - 1.0) < 0.03

    with pytest.raises(DataError):
        fit_latent_scale(torch.zeros(100, 8, 8, 4))
    with pytest.raises(DataError):
        fit_latent_scale(torch.ones(99, 8, 8, 4))


def test_toy_autoencoder_is_deterministic_and_trains():
    config = CodecConfig(kind='toy_autoencoder', compression_factor=4)
    a = make_codec(config, seed=0)
    b = make_codec(config, seed=0)

    for p, q in zip(a.parameters(), b.parameters()):
        assert torch.equal(p, q)

    images = smooth_images(16, 16)
    z1 = a.encode(images).data
    z2 = a.encode(images).data
    assert z1.shape == (16, 4, 4, 4)
    assert torch.equal(z1, z2)

    losses = fit_autoencoder(a, images, steps=60, batch_size=8, lr=2e-3,
                             display_progress=False)
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
    assert not any(p.requires_grad for p in a.parameters())
    assert isinstance(a, ToyAutoencoderCodec)


def test_encode_images_in_batches():
    codec = FixedOrthogonalCodec(CodecConfig(compression_factor=4))
    images = smooth_images(5, 16)

    assert torch.allclose(encode_images(codec, images, batch_size=2),
                          codec.encode(images).data, atol=1e-6)


@pytest.mark.slow
def test_toy_autoencoder_round_trip_on_held_out_slides():
    spec = GeneratorSpec()
    train = generate_dataset(spec, 400)
    test = generate_dataset(spec, 50, offset=1000000)

    images = torch.as_tensor(np.stack([p.he for p in train] +
                                      [p.ihc for p in train]),
                             dtype=torch.float32)
    codec = make_codec(CodecConfig(kind='toy_autoencoder'))
    fit_autoencoder(codec, images, steps=2000, display_progress=False)

    held_out = np.stack([p.he for p in test] + [p.ihc for p in test])
    assert round_trip_psnr(codec, held_out) >= 22.0
