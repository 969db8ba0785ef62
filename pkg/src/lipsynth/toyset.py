"""Deterministic synthetic audio-visual corpus.

Each clip is a procedurally drawn face whose mouth opening is an analytic
function of the audio amplitude envelope, so lip-sync quality can be scored
against ground truth without any learned components.  Identity is encoded as
seeded face hue and texture; everything the audio influences is confined to
the lower half of the face crop.
"""

from __future__ import annotations

import colorsys
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import label as cc_label

from .audio import SAMPLE_RATE, VIDEO_FPS, Waveform, log_mel, melspectrogram, save_mel_blob
from .visual import Clip, save_clip, to_uint8

FRAME_SIZE = 224
CROP_BOX = (32, 32, 160)

# face geometry as fractions of the crop side
FACE_CY = 0.475
FACE_R = 0.42
EYE_Y = 0.34
EYE_DX = 0.15
EYE_R = 0.045
MOUTH_CY = 0.75
MOUTH_A = 0.16          # horizontal semi-axis
MOUTH_B_MIN = 0.02      # vertical semi-axis at aperture 0
MOUTH_B_MAX = 0.12      # vertical semi-axis at aperture 1

MOUTH_RGB = (0.62, 0.05, 0.08)
_REDNESS_THRESHOLD = 0.33

_AUDIO_STREAM = 0
_VISUAL_STREAM = 1

ENVELOPE_CTRL_SPACING_S = 0.16


@dataclass(frozen=True)
class Identity:
    """Per-clip appearance parameters derived from the clip seed."""

    face_rgb: tuple[float, float, float]
    bg_rgb: tuple[float, float, float]
    tex_freq: float
    tex_phase: float
    center: tuple[float, float]  # face center in full-frame pixels (x, y)


def synth_audio(seed: int, duration_s: float) -> tuple[Waveform, np.ndarray]:
    """Seeded multi-tone audio with a piecewise-smooth amplitude envelope.

    Returns the 16 kHz waveform and the envelope averaged per video frame
    (25 Hz trace, values in [0, 1]).
    """
    if duration_s < 0.2:
        raise ValueError(f"duration must be >= 0.2 s, got {duration_s}")
    rng = np.random.default_rng([seed, _AUDIO_STREAM])
    n_samples = int(round(duration_s * SAMPLE_RATE))

    k = int(rng.integers(2, 5))
    # keep tones >= 60 Hz apart so their beating averages out within one
    # 40 ms video frame and per-frame RMS tracks the envelope
    freqs: list[float] = []
    while len(freqs) < k:
        f = float(rng.uniform(200.0, 2000.0))
        if all(abs(f - g) >= 60.0 for g in freqs):
            freqs.append(f)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=k)
    weights = rng.dirichlet(np.ones(k))

    n_ctrl = max(3, int(np.ceil(duration_s / ENVELOPE_CTRL_SPACING_S)) + 1)
    ctrl_t = np.linspace(0.0, duration_s, n_ctrl)
    ctrl_v = rng.uniform(0.0, 1.0, size=n_ctrl)
    t = np.arange(n_samples) / SAMPLE_RATE
    envelope = np.clip(PchipInterpolator(ctrl_t, ctrl_v)(t), 0.0, 1.0)

    carrier = np.zeros(n_samples)
    for w, f, p in zip(weights, freqs, phases):
        carrier += w * np.sin(2.0 * np.pi * f * t + p)
    samples = (0.95 * envelope * carrier).astype(np.float32)

    spf = SAMPLE_RATE // VIDEO_FPS
    n_frames = n_samples // spf
    env25 = envelope[: n_frames * spf].reshape(n_frames, spf).mean(axis=1)
    return Waveform(samples=samples, sample_rate=SAMPLE_RATE), env25


def _identity(seed: int, rng: np.random.Generator) -> Identity:
    # golden-ratio hue stepping keeps nearby seeds far apart in hue; the
    # range avoids the red band reserved for the mouth
    hue = 0.16 + (seed * 0.618034) % 0.72
    sat = 0.45
    val = 0.55 + 0.30 * ((seed * 0.381966) % 1.0)
    face_rgb = colorsys.hsv_to_rgb(hue, sat, val)
    bg_hue = (hue + 0.5) % 1.0
    bg_rgb = colorsys.hsv_to_rgb(0.55 + 0.2 * ((bg_hue * 7) % 1.0), 0.15, 0.25)
    cx = FRAME_SIZE / 2 + rng.uniform(-3.0, 3.0)
    cy = CROP_BOX[1] + FACE_CY * CROP_BOX[2] + rng.uniform(-3.0, 3.0)
    return Identity(
        face_rgb=face_rgb,
        bg_rgb=bg_rgb,
        tex_freq=float(rng.integers(2, 5)),
        tex_phase=float(rng.uniform(0.0, 2.0 * np.pi)),
        center=(cx, cy),
    )


def draw_frame(identity: Identity, aperture: float, size: int = FRAME_SIZE) -> np.ndarray:
    """Render one face frame as a float32 [-1, 1] channels-last array."""
    scale = size / FRAME_SIZE
    C = CROP_BOX[2] * scale
    cx, cy = identity.center[0] * scale, identity.center[1] * scale
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    img = np.empty((size, size, 3))
    img[:] = identity.bg_rgb

    r = np.hypot(xx - cx, yy - cy)
    face = r <= FACE_R * C
    shade = 1.0 + 0.18 * np.sin(
        2.0 * np.pi * identity.tex_freq * r / (FACE_R * C) + identity.tex_phase
    )
    for ch, base in enumerate(identity.face_rgb):
        img[..., ch] = np.where(face, np.clip(base * shade, 0.0, 1.0), img[..., ch])

    eye_y = cy + (EYE_Y - FACE_CY) * C
    for sx in (-1.0, 1.0):
        eye = np.hypot(xx - (cx + sx * EYE_DX * C), yy - eye_y) <= EYE_R * C
        img[eye] = (0.08, 0.08, 0.10)

    mouth_cy = cy + (MOUTH_CY - FACE_CY) * C
    b = (MOUTH_B_MIN + float(aperture) * (MOUTH_B_MAX - MOUTH_B_MIN)) * C
    a = MOUTH_A * C
    mouth = ((xx - cx) / a) ** 2 + ((yy - mouth_cy) / b) ** 2 <= 1.0
    img[mouth] = MOUTH_RGB

    return (img * 2.0 - 1.0).astype(np.float32)


def mouth_landmarks(identity: Identity, aperture: float) -> np.ndarray:
    """Analytic mouth extrema (left, right, top, bottom) in frame pixels."""
    C = float(CROP_BOX[2])
    cx, cy = identity.center
    mouth_cy = cy + (MOUTH_CY - FACE_CY) * C
    a = MOUTH_A * C
    b = (MOUTH_B_MIN + float(aperture) * (MOUTH_B_MAX - MOUTH_B_MIN)) * C
    return np.array(
        [
            [cx - a, mouth_cy],
            [cx + a, mouth_cy],
            [cx, mouth_cy - b],
            [cx, mouth_cy + b],
        ]
    )


def render_clip(seed: int, n_frames: int) -> Clip:
    """Render a toy clip whose mouth opening follows its own audio envelope.

    The audio runs 0.2 s past the last frame so every per-frame mel window
    is fully covered.
    """
    if n_frames < 5:
        raise ValueError(f"need at least 5 frames, got {n_frames}")
    duration = (n_frames + 5) / VIDEO_FPS
    wave, env25 = synth_audio(seed, duration)

    env = env25[:n_frames]
    span = env.max() - env.min()
    if span < 1e-9:
        aperture = np.zeros(n_frames)
    else:
        aperture = (env - env.min()) / span

    rng = np.random.default_rng([seed, _VISUAL_STREAM])
    identity = _identity(seed, rng)

    frames = np.empty((n_frames, FRAME_SIZE, FRAME_SIZE, 3), dtype=np.uint8)
    landmarks = np.empty((n_frames, 4, 2))
    for s in range(n_frames):
        frames[s] = to_uint8(draw_frame(identity, aperture[s]))
        landmarks[s] = mouth_landmarks(identity, aperture[s])

    return Clip(
        clip_id=f"clip_{seed:08d}",
        frames=frames,
        wave=wave,
        fps=VIDEO_FPS,
        crop_box=CROP_BOX,
        aperture=aperture,
        landmarks=landmarks,
        seed=seed,
    )


def aperture_estimate(frame: np.ndarray) -> float:
    """Estimate the mouth opening of a rendered face crop in [0, 1].

    Measures the vertical extent of the largest mouth-colored connected
    region in the lower half.  Returns 0 (with a warning) when no mouth
    pixels are found.
    """
    size = frame.shape[0]
    unit = (np.asarray(frame, dtype=np.float64) + 1.0) / 2.0
    lower = unit[size // 2:]
    redness = lower[..., 0] - 0.5 * (lower[..., 1] + lower[..., 2])
    mouthish = redness > _REDNESS_THRESHOLD
    if not mouthish.any():
        warnings.warn("no mouth-colored region found in lower half", stacklevel=2)
        return 0.0
    labels, n = cc_label(mouthish)
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    rows = np.nonzero(labels == int(np.argmax(counts)))[0]
    extent = rows.max() - rows.min() + 1
    b_est = extent / 2.0
    return float(np.clip((b_est / size - MOUTH_B_MIN) / (MOUTH_B_MAX - MOUTH_B_MIN), 0.0, 1.0))


def clip_seed(master_seed: int, index: int) -> int:
    return master_seed * 1_000_003 + index


def generate_corpus(n_clips: int, frames_per_clip: int, out_dir, seed: int) -> dict:
    """Write ``n_clips`` toy clips plus the corpus manifest.

    Splits are 80/10/10 train/val/test in seed order.  Mel spectrograms are
    precomputed with a corpus-level normalization range and written next to
    each clip as raw float32 blobs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    waves = []
    for i in range(n_clips):
        s = clip_seed(seed, i)
        clip = render_clip(s, frames_per_clip)
        clip = Clip(
            clip_id=f"clip_{i:04d}",
            frames=clip.frames,
            wave=clip.wave,
            fps=clip.fps,
            crop_box=clip.crop_box,
            aperture=clip.aperture,
            landmarks=clip.landmarks,
            seed=s,
        )
        save_clip(out_dir / clip.clip_id, clip)
        waves.append(clip.wave)
        entries.append({"id": clip.clip_id, "seed": s, "n_frames": frames_per_clip})

    raw_mels = [log_mel(w) for w in waves]
    lo = float(min(m.min() for m in raw_mels))
    hi = float(max(m.max() for m in raw_mels))
    for entry, wave in zip(entries, waves):
        save_mel_blob(out_dir / entry["id"], melspectrogram(wave, stats=(lo, hi)))

    ids = [e["id"] for e in entries]
    n_train = int(0.8 * n_clips)
    n_val = int(0.9 * n_clips) - n_train
    manifest = {
        "master_seed": seed,
        "fps": VIDEO_FPS,
        "frame_size": FRAME_SIZE,
        "crop_box": list(CROP_BOX),
        "frames_per_clip": frames_per_clip,
        "clips": entries,
        "splits": {
            "train": ids[:n_train],
            "val": ids[n_train: n_train + n_val],
            "test": ids[n_train + n_val:],
        },
        "mel_stats": {"lo": lo, "hi": hi},
    }
    (out_dir / "corpus.json").write_text(json.dumps(manifest, indent=1))
    return manifest
