import numpy as np
import pytest
import torch

from lipsynth.diffusion import forward_sample, make_schedule
from lipsynth.visual import (
    composite,
    crop_resize,
    forward_mask_noise,
    lower_half_mask,
    noise_mask,
    paste_back,
    to_uint8,
    to_unit,
)


def rand_frame(rng, h=16, w=16):
    return rng.uniform(-1, 1, size=(h, w, 3)).astype(np.float32)


def test_lower_half_mask_smallest():
    m = lower_half_mask(2, 2)
    np.testing.assert_array_equal(m, [[0, 0], [1, 1]])


def test_lower_half_mask_128():
    m = lower_half_mask(128, 96)
    assert np.all(m[:64] == 0)
    assert np.all(m[64:] == 1)
    assert m.sum() == 64 * 96


def test_lower_half_mask_even_fraction():
    for h, w in ((4, 6), (64, 64), (128, 128)):
        assert lower_half_mask(h, w).mean() == 0.5


def test_lower_half_mask_odd_rows():
    # odd h: ceil(h/2) rows are masked
    m = lower_half_mask(5, 4)
    assert m.sum() == 3 * 4


def test_lower_half_mask_rejects_tiny():
    with pytest.raises(ValueError):
        lower_half_mask(1, 10)


def test_noise_mask_empty_and_full():
    rng = np.random.default_rng(0)
    v, eta = rand_frame(rng), rand_frame(rng)
    np.testing.assert_array_equal(noise_mask(v, np.zeros((16, 16), np.float32), eta), v)
    np.testing.assert_array_equal(noise_mask(v, np.ones((16, 16), np.float32), eta), eta)


def test_noise_mask_regions():
    rng = np.random.default_rng(1)
    v, eta = rand_frame(rng), rand_frame(rng)
    m = lower_half_mask(16, 16)
    out = noise_mask(v, m, eta)
    np.testing.assert_array_equal(out[:8], v[:8])
    np.testing.assert_array_equal(out[8:], eta[8:])


def test_noise_mask_shape_mismatch():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        noise_mask(rand_frame(rng), lower_half_mask(16, 16), rand_frame(rng, h=8))


def test_forward_mask_noise_regions():
    rng = np.random.default_rng(3)
    sched = make_schedule(100)
    v, eps = rand_frame(rng), rand_frame(rng)
    m = lower_half_mask(16, 16)
    out = forward_mask_noise(v, m, 50, eps, sched)
    np.testing.assert_array_equal(out[:8], v[:8])
    np.testing.assert_allclose(out[8:], forward_sample(v, 50, eps, sched)[8:], rtol=1e-6)


def test_forward_mask_noise_low_t_near_identity():
    rng = np.random.default_rng(4)
    sched = make_schedule(1000, beta_start=1e-7, beta_end=1e-7)
    v, eps = rand_frame(rng), rand_frame(rng)
    out = forward_mask_noise(v, lower_half_mask(16, 16), 1, eps, sched)
    np.testing.assert_allclose(out, v, atol=1e-3)


def test_forward_mask_noise_t_T_matches_noise_mask():
    rng = np.random.default_rng(5)
    sched = make_schedule(50, beta_start=0.5, beta_end=0.9)  # alpha_bar_T ~ 0
    v, eps = rand_frame(rng), rand_frame(rng)
    m = lower_half_mask(16, 16)
    out = forward_mask_noise(v, m, 50, eps, sched)
    np.testing.assert_allclose(out, noise_mask(v, m, eps), atol=1e-5)


def test_composite_idempotent():
    rng = np.random.default_rng(6)
    g, o = rand_frame(rng), rand_frame(rng)
    m = lower_half_mask(16, 16)
    once = composite(g, o, m)
    twice = composite(once, o, m)
    np.testing.assert_array_equal(once, twice)
    np.testing.assert_array_equal(composite(o, o, m), o)


def test_composite_unmasked_region_exact():
    rng = np.random.default_rng(7)
    g, o = rand_frame(rng), rand_frame(rng)
    out = composite(g, o, lower_half_mask(16, 16))
    assert np.array_equal(out[:8], o[:8])


def test_composite_torch_batch_broadcast():
    g = torch.randn(2, 3, 8, 8)
    o = torch.randn(2, 3, 8, 8)
    m = torch.from_numpy(lower_half_mask(8, 8))
    out = composite(g, o, m)
    assert torch.equal(out[:, :, :4], o[:, :, :4])
    assert torch.equal(out[:, :, 4:], g[:, :, 4:])


def test_crop_resize_unit_scale():
    rng = np.random.default_rng(8)
    frame = rng.uniform(-1, 1, size=(224, 224, 3)).astype(np.float32)
    out = crop_resize(frame, (10, 20, 128), size=128)
    np.testing.assert_array_equal(out, frame[20:148, 10:138])


def test_crop_resize_out_of_bounds():
    frame = np.zeros((224, 224, 3), dtype=np.float32)
    with pytest.raises(ValueError):
        crop_resize(frame, (200, 0, 128))
    with pytest.raises(ValueError):
        crop_resize(frame, (-1, 0, 64))


def test_paste_back_outside_untouched():
    rng = np.random.default_rng(9)
    frame = rng.uniform(-1, 1, size=(224, 224, 3)).astype(np.float32)
    patch = rng.uniform(-1, 1, size=(128, 128, 3)).astype(np.float32)
    out = paste_back(patch, (30, 40, 160), frame)
    mask = np.ones((224, 224), dtype=bool)
    mask[40:200, 30:190] = False
    np.testing.assert_array_equal(out[mask], frame[mask])


def test_crop_paste_round_trip_psnr():
    # smooth content survives the bilinear down/up round trip
    yy, xx = np.mgrid[0:224, 0:224] / 224.0
    frame = np.stack([np.sin(3 * yy), np.cos(2 * xx), yy * xx], axis=-1).astype(np.float32)
    box = (30, 40, 160)
    patch = crop_resize(frame, box, size=128)
    back = paste_back(patch, box, frame)
    region = slice(40, 200), slice(30, 190)
    mse = np.mean((((back[region] + 1) / 2) - ((frame[region] + 1) / 2)) ** 2)
    psnr = -10 * np.log10(max(mse, 1e-12))
    assert psnr >= 40.0


def test_uint8_round_trip_exact():
    px = np.arange(256, dtype=np.uint8).reshape(16, 16, 1).repeat(3, axis=2)
    np.testing.assert_array_equal(to_uint8(to_unit(px)), px)
