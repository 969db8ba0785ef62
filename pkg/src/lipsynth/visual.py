"""Frame-domain transforms: masking, noise compositing, crop/resize, clip IO.

Frames are channels-last float32 arrays in [-1, 1] at the pipeline level;
model code converts to channels-first torch tensors at its boundary.  The
mask/composite operations are plain elementwise expressions, so they also
accept torch tensors (channels-first batches broadcast the (H, W) mask over
trailing dims).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .audio import Waveform, load_wav, save_wav
from .diffusion import NoiseSchedule, forward_sample


def lower_half_mask(h: int, w: int) -> np.ndarray:
    """Binary mask with rows floor(h/2) .. h-1 set to 1 (region to generate)."""
    if h < 2 or w < 2:
        raise ValueError(f"mask needs h, w >= 2, got ({h}, {w})")
    m = np.zeros((h, w), dtype=np.float32)
    m[h // 2:] = 1.0
    return m


def _mask_like(m, x):
    # channels-last (H, W, C) arrays need an explicit channel axis; torch
    # (B, C, H, W) batches broadcast (H, W) over trailing dims natively
    if hasattr(m, "ndim") and m.ndim + 1 == x.ndim and tuple(x.shape[: m.ndim]) == tuple(m.shape):
        return m[..., None]
    return m


def noise_mask(v, m, eta):
    """Replace the masked region of ``v`` with ``eta``: v*(1-M) + eta*M."""
    if v.shape != eta.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {eta.shape}")
    mm = _mask_like(m, v)
    return v * (1 - mm) + eta * mm


def forward_mask_noise(v, m, t: int, eps, sched: NoiseSchedule):
    """Clean top, t-noised bottom: v*(1-M) + forward_sample(v, t, eps)*M."""
    mm = _mask_like(m, v)
    return v * (1 - mm) + forward_sample(v, t, eps, sched) * mm


def composite(gen, orig, m):
    """Paste the generated masked region onto the original: orig*(1-M) + gen*M."""
    if gen.shape != orig.shape:
        raise ValueError(f"shape mismatch: {gen.shape} vs {orig.shape}")
    mm = _mask_like(m, gen)
    return orig * (1 - mm) + gen * mm


def _resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    t = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)[None]
    out = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    return out[0].permute(1, 2, 0).numpy()


def crop_resize(frame: np.ndarray, box: tuple[int, int, int], size: int = 128) -> np.ndarray:
    """Crop ``box`` = (x, y, side) from a channels-last frame and resize to
    ``size`` x ``size`` (bilinear; exact crop when side == size)."""
    x, y, side = box
    h, w = frame.shape[:2]
    if x < 0 or y < 0 or x + side > w or y + side > h or side < 1:
        raise ValueError(f"crop box {box} out of bounds for frame {frame.shape}")
    crop = frame[y: y + side, x: x + side]
    if side == size:
        return crop.astype(np.float32).copy()
    return _resize_bilinear(crop, size)


def paste_back(patch: np.ndarray, box: tuple[int, int, int], frame: np.ndarray) -> np.ndarray:
    """Resize ``patch`` to the crop box and paste it into a copy of ``frame``;
    pixels outside the box are untouched."""
    x, y, side = box
    h, w = frame.shape[:2]
    if x < 0 or y < 0 or x + side > w or y + side > h or side < 1:
        raise ValueError(f"crop box {box} out of bounds for frame {frame.shape}")
    out = frame.copy()
    if patch.shape[0] == side and patch.shape[1] == side:
        out[y: y + side, x: x + side] = patch
    else:
        out[y: y + side, x: x + side] = _resize_bilinear(patch, side)
    return out


def to_unit(frame: np.ndarray) -> np.ndarray:
    """uint8 [0, 255] -> float32 [-1, 1]."""
    return np.clip(frame.astype(np.float32) / 127.5 - 1.0, -1.0, 1.0)


def to_uint8(frame: np.ndarray) -> np.ndarray:
    """float32 [-1, 1] -> uint8 [0, 255]."""
    return np.clip(np.round((frame + 1.0) * 127.5), 0, 255).astype(np.uint8)


def load_frame(path) -> np.ndarray:
    return to_unit(np.asarray(Image.open(path).convert("RGB")))


def save_frame(path, frame: np.ndarray) -> None:
    Image.fromarray(to_uint8(frame)).save(path)


@dataclass
class Clip:
    """One clip in the on-disk directory format.

    ``frames`` is (S, H, W, 3) uint8; mouth traces are present for synthetic
    clips and absent for external footage.
    """

    clip_id: str
    frames: np.ndarray
    wave: Waveform
    fps: int
    crop_box: tuple[int, int, int]
    aperture: np.ndarray | None = None
    landmarks: np.ndarray | None = None
    seed: int | None = None

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def frame_unit(self, s: int) -> np.ndarray:
        return to_unit(self.frames[s])

    def crop_unit(self, s: int, size: int) -> np.ndarray:
        return crop_resize(self.frame_unit(s), self.crop_box, size)


def save_clip(directory, clip: Clip) -> None:
    directory = Path(directory)
    frames_dir = directory / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    for s in range(clip.n_frames):
        Image.fromarray(clip.frames[s]).save(frames_dir / f"{s:06d}.png")
    save_wav(directory / "audio.wav", clip.wave)
    meta = {
        "clip_id": clip.clip_id,
        "fps": clip.fps,
        "sample_rate": clip.wave.sample_rate,
        "n_frames": clip.n_frames,
        "crop_box": list(clip.crop_box),
    }
    if clip.seed is not None:
        meta["seed"] = clip.seed
    if clip.aperture is not None:
        meta["aperture"] = [float(a) for a in clip.aperture]
    if clip.landmarks is not None:
        meta["landmarks"] = clip.landmarks.tolist()
    (directory / "meta.json").write_text(json.dumps(meta, indent=1))


def load_clip(directory) -> Clip:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    frame_paths = sorted((directory / "frames").glob("*.png"))
    if len(frame_paths) != meta["n_frames"]:
        raise ValueError(
            f"{directory}: meta says {meta['n_frames']} frames, found {len(frame_paths)}"
        )
    frames = np.stack([np.asarray(Image.open(p).convert("RGB")) for p in frame_paths])
    wave = load_wav(directory / "audio.wav")
    return Clip(
        clip_id=meta["clip_id"],
        frames=frames,
        wave=wave,
        fps=meta["fps"],
        crop_box=tuple(meta["crop_box"]),
        aperture=np.array(meta["aperture"], dtype=np.float64) if "aperture" in meta else None,
        landmarks=np.array(meta["landmarks"], dtype=np.float64) if "landmarks" in meta else None,
        seed=meta.get("seed"),
    )
