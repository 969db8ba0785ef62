"""In-memory access to a corpus directory (clips, crops, mel windows)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio import MelSpectrogram, load_mel_blob, mel_window, melspectrogram
from .visual import Clip, crop_resize, load_clip, to_unit


class CorpusData:
    """Lazily loads clips from a corpus directory and caches face crops.

    Mel spectrograms come from the precomputed corpus blobs (which share one
    normalization range); crops are resized once per (clip, size) pair.
    """

    def __init__(self, corpus_dir):
        self.root = Path(corpus_dir)
        manifest_path = self.root / "corpus.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no corpus manifest at {manifest_path}")
        self.manifest = json.loads(manifest_path.read_text())
        self.mel_stats = (
            self.manifest["mel_stats"]["lo"],
            self.manifest["mel_stats"]["hi"],
        )
        self._clips: dict[str, Clip] = {}
        self._mels: dict[str, MelSpectrogram] = {}
        self._crops: dict[tuple[str, int], np.ndarray] = {}

    def split(self, name: str) -> list[str]:
        return list(self.manifest["splits"][name])

    @property
    def clip_ids(self) -> list[str]:
        return [e["id"] for e in self.manifest["clips"]]

    def clip_dir(self, clip_id: str) -> Path:
        return self.root / clip_id

    def clip(self, clip_id: str) -> Clip:
        if clip_id not in self._clips:
            self._clips[clip_id] = load_clip(self.clip_dir(clip_id))
        return self._clips[clip_id]

    def mel(self, clip_id: str) -> MelSpectrogram:
        if clip_id not in self._mels:
            blob = self.clip_dir(clip_id) / "mel.f32"
            if blob.exists():
                self._mels[clip_id] = load_mel_blob(self.clip_dir(clip_id))
            else:
                self._mels[clip_id] = melspectrogram(
                    self.clip(clip_id).wave, stats=self.mel_stats
                )
        return self._mels[clip_id]

    def n_frames(self, clip_id: str) -> int:
        return self.clip(clip_id).n_frames

    def crops_float(self, clip_id: str, size: int) -> np.ndarray:
        """All face crops of a clip as (S, size, size, 3) float32 in [-1, 1]."""
        key = (clip_id, size)
        if key not in self._crops:
            clip = self.clip(clip_id)
            self._crops[key] = np.stack(
                [
                    crop_resize(to_unit(clip.frames[s]), clip.crop_box, size)
                    for s in range(clip.n_frames)
                ]
            )
        return self._crops[key]

    def window(self, clip_id: str, s: int) -> np.ndarray:
        """The (16, 80) mel window aligned to frame ``s`` of a clip."""
        return mel_window(self.mel(clip_id), s).data

    def aperture(self, clip_id: str) -> np.ndarray:
        return self.clip(clip_id).aperture
