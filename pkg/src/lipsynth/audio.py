"""Waveform ingestion, mel-spectrogram analysis, and per-video-frame windows.

Audio is processed at 16 kHz with a 800-sample analysis window and a
200-sample hop, giving 80 mel frames per second; a video frame at 25 fps is
therefore covered by a 16-frame (200 ms) mel slice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

SAMPLE_RATE = 16000
WIN_SIZE = 800
HOP_SIZE = 200
N_MELS = 80
FMIN = 55.0
FMAX = 7600.0
LOG_FLOOR = 1e-5
VIDEO_FPS = 25
MEL_FPS = SAMPLE_RATE // HOP_SIZE  # 80
WINDOW_FRAMES = 16


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelSpectrogram:
    """Normalized log-mel frames, shape (n_frames, 80), values in [-1, 1]."""

    frames: np.ndarray
    lo: float
    hi: float
    hop: int = HOP_SIZE
    win: int = WIN_SIZE
    mel_fps: int = MEL_FPS

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != N_MELS:
            raise ValueError(f"mel frames must be (n, {N_MELS}), got {self.frames.shape}")


@dataclass(frozen=True)
class AudioWindow:
    """16 consecutive mel frames aligned to one video frame."""

    data: np.ndarray
    frame_index: int
    padded: bool = False

    def __post_init__(self):
        if self.data.shape != (WINDOW_FRAMES, N_MELS):
            raise ValueError(
                f"audio window must be ({WINDOW_FRAMES}, {N_MELS}), got {self.data.shape}"
            )


def load_wav(path) -> Waveform:
    """Read a 16-bit PCM mono WAV file into float32 samples in [-1, 1]."""
    sr, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono WAV, got shape {data.shape}")
    if data.dtype != np.int16:
        raise ValueError(f"{path}: expected 16-bit PCM, got dtype {data.dtype}")
    return Waveform(samples=(data / 32768.0).astype(np.float32), sample_rate=sr)


def save_wav(path, wave: Waveform) -> None:
    pcm = np.clip(np.round(wave.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, wave.sample_rate, pcm)


def resample(wave: Waveform, target_rate: int = SAMPLE_RATE) -> Waveform:
    """Band-limited resampling via polyphase filtering."""
    if wave.sample_rate <= 0:
        raise ValueError(f"invalid sample rate {wave.sample_rate}")
    if len(wave.samples) == 0:
        raise ValueError("cannot resample an empty waveform")
    if wave.sample_rate == target_rate:
        return wave
    ratio = Fraction(target_rate, wave.sample_rate)
    out = resample_poly(wave.samples.astype(np.float64), ratio.numerator, ratio.denominator)
    return Waveform(samples=out.astype(np.float32), sample_rate=target_rate)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = WIN_SIZE,
                   sr: int = SAMPLE_RATE, fmin: float = FMIN, fmax: float = FMAX) -> np.ndarray:
    """Triangular mel filters, shape (n_mels, n_fft // 2 + 1)."""
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    freqs = np.linspace(0.0, sr / 2.0, n_fft // 2 + 1)
    fb = np.zeros((n_mels, len(freqs)))
    for i in range(n_mels):
        left, center, right = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (freqs - left) / (center - left)
        down = (right - freqs) / (right - center)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


_FILTERBANK = None


def _filterbank() -> np.ndarray:
    global _FILTERBANK
    if _FILTERBANK is None:
        _FILTERBANK = mel_filterbank()
    return _FILTERBANK


def log_mel(wave: Waveform) -> np.ndarray:
    """Unnormalized log10 mel magnitudes, shape (1 + len // hop, 80).

    The signal is center-padded (reflect) by half a window so frame k is
    centered on sample k * hop.
    """
    if wave.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz input, got {wave.sample_rate}")
    x = wave.samples.astype(np.float64)
    if len(x) < HOP_SIZE:
        raise ValueError(f"waveform too short ({len(x)} samples, need >= {HOP_SIZE})")
    n_frames = 1 + len(x) // HOP_SIZE
    pad = WIN_SIZE // 2
    if len(x) >= pad + 1:
        x = np.pad(x, pad, mode="reflect")
    else:
        x = np.pad(x, pad, mode="edge")
    window = get_window("hann", WIN_SIZE, fftbins=True)
    frames = np.empty((n_frames, WIN_SIZE))
    for k in range(n_frames):
        frames[k] = x[k * HOP_SIZE: k * HOP_SIZE + WIN_SIZE] * window
    spec = np.abs(np.fft.rfft(frames, axis=1))
    mels = spec @ _filterbank().T
    return np.log10(np.maximum(LOG_FLOOR, mels))


def melspectrogram(wave: Waveform, stats: tuple[float, float] | None = None) -> MelSpectrogram:
    """Log-mel analysis normalized to [-1, 1].

    ``stats`` is the (lo, hi) log-mel range to normalize against; pass the
    corpus-level range so every clip shares one scale.  Without it the
    input's own range is used (degenerate inputs such as silence map to a
    constant -1).
    """
    lm = log_mel(wave)
    if stats is None:
        lo, hi = float(lm.min()), float(lm.max())
    else:
        lo, hi = float(stats[0]), float(stats[1])
    if hi - lo < 1e-9:
        frames = np.full_like(lm, -1.0)
    else:
        frames = np.clip(2.0 * (lm - lo) / (hi - lo) - 1.0, -1.0, 1.0)
    return MelSpectrogram(frames=frames.astype(np.float32), lo=lo, hi=hi)


def mel_window(mel: MelSpectrogram, s: int, video_fps: int = VIDEO_FPS,
               centered: bool = False) -> AudioWindow:
    """Slice the 16-frame mel window aligned to video frame ``s``.

    The window starts at the mel frame corresponding to frame ``s``
    (``centered=True`` shifts it back by half a window).  Windows that
    overrun the end of the spectrogram are edge-replicated and flagged.
    """
    if s < 0:
        raise ValueError(f"video frame index must be >= 0, got {s}")
    start = math.floor(mel.mel_fps * s / video_fps)
    if centered:
        start = max(0, start - WINDOW_FRAMES // 2)
    n = mel.frames.shape[0]
    padded = start + WINDOW_FRAMES > n
    if padded:
        avail = mel.frames[min(start, n - 1): n]
        fill = np.repeat(mel.frames[-1:], WINDOW_FRAMES - len(avail), axis=0)
        data = np.concatenate([avail, fill], axis=0)
    else:
        data = mel.frames[start: start + WINDOW_FRAMES]
    return AudioWindow(data=np.ascontiguousarray(data), frame_index=s, padded=padded)


def save_mel_blob(directory, mel: MelSpectrogram) -> None:
    """Write mel frames as a raw little-endian float32 blob plus a sidecar
    shape manifest."""
    directory = Path(directory)
    data = mel.frames.astype("<f4")
    (directory / "mel.f32").write_bytes(data.tobytes(order="C"))
    manifest = {
        "shape": list(data.shape),
        "dtype": "float32",
        "byte_order": "little",
        "hop": mel.hop,
        "win": mel.win,
        "mel_fps": mel.mel_fps,
        "lo": mel.lo,
        "hi": mel.hi,
    }
    (directory / "mel.json").write_text(json.dumps(manifest, indent=1))


def load_mel_blob(directory) -> MelSpectrogram:
    directory = Path(directory)
    manifest = json.loads((directory / "mel.json").read_text())
    shape = tuple(manifest["shape"])
    raw = (directory / "mel.f32").read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ValueError(
            f"{directory / 'mel.f32'}: expected {expected} bytes for shape {shape}, "
            f"got {len(raw)}"
        )
    frames = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return MelSpectrogram(frames=frames, lo=manifest["lo"], hi=manifest["hi"])
