import json

import numpy as np
import pytest

from lipsynth.audio import load_mel_blob
from lipsynth.toyset import (
    CROP_BOX,
    MOUTH_B_MAX,
    MOUTH_B_MIN,
    aperture_estimate,
    clip_seed,
    draw_frame,
    generate_corpus,
    mouth_landmarks,
    render_clip,
    synth_audio,
    _identity,
)
from lipsynth.visual import crop_resize, load_clip, to_unit


def test_synth_audio_deterministic():
    a, env_a = synth_audio(7, 1.0)
    b, env_b = synth_audio(7, 1.0)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(env_a, env_b)


def test_synth_audio_envelope_range():
    for seed in range(20):
        _, env = synth_audio(seed, 1.0)
        assert env.min() >= 0.0 and env.max() <= 1.0


def test_synth_audio_rejects_short():
    with pytest.raises(ValueError):
        synth_audio(0, 0.1)


def test_synth_audio_rms_tracks_envelope():
    rs = []
    for seed in range(100):
        wave, env = synth_audio(seed, 1.0)
        n = len(env)
        rms = np.sqrt((wave.samples[: n * 640].reshape(n, 640) ** 2).mean(axis=1))
        rs.append(np.corrcoef(rms, env)[0, 1])
    assert min(rs) >= 0.95


def test_render_clip_deterministic():
    a = render_clip(11, 10)
    b = render_clip(11, 10)
    np.testing.assert_array_equal(a.frames, b.frames)
    np.testing.assert_array_equal(a.wave.samples, b.wave.samples)
    np.testing.assert_array_equal(a.aperture, b.aperture)


def test_render_clip_aperture_is_rescaled_envelope():
    clip = render_clip(5, 20)
    _, env = synth_audio(5, 25 / 25)
    env = env[:20]
    expected = (env - env.min()) / (env.max() - env.min())
    np.testing.assert_allclose(clip.aperture, expected, atol=1e-12)
    assert clip.aperture.min() == 0.0 and clip.aperture.max() == 1.0


def test_render_clip_rejects_tiny():
    with pytest.raises(ValueError):
        render_clip(0, 4)


def test_constant_aperture_gives_static_lower_half():
    ident = _identity(2, np.random.default_rng([2, 1]))
    a = draw_frame(ident, 0.0)
    b = draw_frame(ident, 0.0)
    np.testing.assert_array_equal(a, b)
    # minimal opening means the mouth region is the smallest it can be
    est = aperture_estimate(crop_resize(a, CROP_BOX, 160))
    assert est <= 0.05


def test_upper_half_independent_of_audio():
    # same seed, different durations -> different envelopes, same identity;
    # the crop's upper half must be byte-identical
    short = render_clip(9, 10)
    long = render_clip(9, 30)
    assert not np.array_equal(short.aperture, long.aperture[:10])
    x, y, side = CROP_BOX
    half = side // 2
    for s in range(10):
        up_a = short.frames[s][y: y + half, x: x + side]
        up_b = long.frames[s][y: y + half, x: x + side]
        np.testing.assert_array_equal(up_a, up_b)


def test_identity_hue_separation():
    dists = []
    x, y, side = CROP_BOX
    for i in range(50):
        a = render_clip(2 * i, 5)
        b = render_clip(2 * i + 1, 5)
        ma = to_unit(a.frames[0])[y: y + side, x: x + side].mean(axis=(0, 1))
        mb = to_unit(b.frames[0])[y: y + side, x: x + side].mean(axis=(0, 1))
        dists.append(np.linalg.norm(ma - mb))
    assert min(dists) > 0.05


def test_aperture_estimate_calibration():
    errs = []
    for seed in range(40):
        clip = render_clip(seed, 25)
        for s in range(clip.n_frames):
            crop = crop_resize(to_unit(clip.frames[s]), clip.crop_box, 160)
            errs.append(abs(aperture_estimate(crop) - clip.aperture[s]))
    assert max(errs) <= 0.05


def test_aperture_estimate_monotone():
    ident = _identity(3, np.random.default_rng([3, 1]))
    ests = [
        aperture_estimate(crop_resize(draw_frame(ident, ap), CROP_BOX, 160))
        for ap in np.arange(0.0, 1.01, 0.1)
    ]
    assert all(a <= b + 1e-9 for a, b in zip(ests, ests[1:]))


def test_aperture_estimate_no_mouth_warns():
    frame = np.full((64, 64, 3), -0.5, dtype=np.float32)
    with pytest.warns(UserWarning):
        assert aperture_estimate(frame) == 0.0


def test_mouth_landmarks_match_geometry():
    ident = _identity(4, np.random.default_rng([4, 1]))
    pts = mouth_landmarks(ident, 0.5)
    assert pts.shape == (4, 2)
    left, right, top, bottom = pts
    # horizontal extent = 2 * MOUTH_A * crop side
    assert right[0] - left[0] == pytest.approx(2 * 0.16 * CROP_BOX[2])
    b = (MOUTH_B_MIN + 0.5 * (MOUTH_B_MAX - MOUTH_B_MIN)) * CROP_BOX[2]
    assert bottom[1] - top[1] == pytest.approx(2 * b)


def test_generate_corpus_layout(tmp_path):
    manifest = generate_corpus(10, 10, tmp_path / "c", seed=123)
    clip_dirs = sorted((tmp_path / "c").glob("clip_*"))
    assert len(clip_dirs) == 10
    pngs = list((tmp_path / "c").glob("clip_*/frames/*.png"))
    assert len(pngs) == 100
    splits = manifest["splits"]
    assert len(splits["train"]) == 8
    assert len(splits["val"]) == 1
    assert len(splits["test"]) == 1
    all_ids = splits["train"] + splits["val"] + splits["test"]
    assert sorted(all_ids) == sorted(e["id"] for e in manifest["clips"])
    assert len(set(all_ids)) == 10


def test_generate_corpus_deterministic(tmp_path):
    m1 = generate_corpus(4, 8, tmp_path / "a", seed=5)
    m2 = generate_corpus(4, 8, tmp_path / "b", seed=5)
    assert m1["clips"] == m2["clips"]
    assert (tmp_path / "a" / "corpus.json").read_text() == (
        tmp_path / "b" / "corpus.json"
    ).read_text()
    for rel in ["clip_0000/frames/000003.png", "clip_0002/audio.wav", "clip_0001/mel.f32"]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_generate_corpus_round_trip(tmp_path):
    generate_corpus(3, 8, tmp_path / "c", seed=1)
    manifest = json.loads((tmp_path / "c" / "corpus.json").read_text())
    clip = load_clip(tmp_path / "c" / "clip_0001")
    rendered = render_clip(clip_seed(1, 1), 8)
    np.testing.assert_array_equal(clip.frames, rendered.frames)
    np.testing.assert_allclose(clip.aperture, rendered.aperture, atol=1e-9)
    mel = load_mel_blob(tmp_path / "c" / "clip_0001")
    assert mel.frames.shape[1] == 80
    stats = manifest["mel_stats"]
    assert stats["lo"] <= stats["hi"]


def test_corpus_oracle_ceiling():
    # estimator trace on ground-truth frames vs audio envelope
    ests, envs = [], []
    for seed in range(10):
        clip = render_clip(seed, 25)
        for s in range(clip.n_frames):
            crop = crop_resize(to_unit(clip.frames[s]), clip.crop_box, 160)
            ests.append(aperture_estimate(crop))
            envs.append(clip.aperture[s])
    assert np.corrcoef(ests, envs)[0, 1] >= 0.9
