"""Contrastive audio-visual synchronization expert.

Two convolutional encoders map a 5-frame stack of lower-face crops and the
matching mel window to unit-norm embeddings; cosine similarity (clamped to
(0, 1]) acts as the sync probability.  The expert is trained contrastively
on aligned vs offset pairs, then frozen: during generator training it only
scores generated sequences, and it also backs the sync metrics.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .denoiser import ResBlock

SYNC_WINDOW = 5
PROB_FLOOR = 1e-7


class SyncExpert(nn.Module):
    def __init__(self, image_size=64, base_channels=32, embed_dim=128, norm_groups=8):
        super().__init__()
        self.image_size = image_size
        self.embed_dim = embed_dim
        c, g = base_channels, norm_groups

        # video branch: 5 lower-half crops stacked -> (B, 15, H/2, W)
        self.v_stem = nn.Conv2d(3 * SYNC_WINDOW, c, 3, padding=1)
        self.v_blocks = nn.ModuleList(
            [
                ResBlock(c, c, groups=g),
                nn.Conv2d(c, 2 * c, 3, stride=2, padding=1),
                ResBlock(2 * c, 2 * c, groups=g),
                nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1),
                ResBlock(4 * c, 4 * c, groups=g),
                nn.Conv2d(4 * c, 4 * c, 3, stride=2, padding=1),
            ]
        )
        self.v_norm = nn.GroupNorm(g, 4 * c)
        self.v_out = nn.Linear(4 * c, embed_dim)

        # audio branch: (B, 1, 16, 80)
        self.a_stem = nn.Conv2d(1, c, 3, padding=1)
        self.a_blocks = nn.ModuleList(
            [
                ResBlock(c, c, groups=g),
                nn.Conv2d(c, 2 * c, 3, stride=2, padding=1),
                ResBlock(2 * c, 2 * c, groups=g),
                nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1),
                ResBlock(4 * c, 4 * c, groups=g),
            ]
        )
        self.a_norm = nn.GroupNorm(g, 4 * c)
        self.a_out = nn.Linear(4 * c, embed_dim)

    def embed_video(self, frames: torch.Tensor, indices=None) -> torch.Tensor:
        """Embed 5 consecutive frames, shape (B, 5, 3, H, W) in [-1, 1].

        Only the lower halves are used.  ``indices`` (if given) must be
        consecutive frame numbers.
        """
        if indices is not None:
            idx = list(indices)
            if any(b - a != 1 for a, b in zip(idx, idx[1:])):
                raise ValueError(f"frames must be consecutive, got indices {idx}")
        if frames.ndim != 5 or frames.shape[1] != SYNC_WINDOW or frames.shape[2] != 3:
            raise ValueError(
                f"expected (B, {SYNC_WINDOW}, 3, H, W), got {tuple(frames.shape)}"
            )
        h_px = frames.shape[3]
        lower = frames[:, :, :, h_px // 2:, :]
        h = lower.reshape(lower.shape[0], SYNC_WINDOW * 3, *lower.shape[3:])
        h = self.v_stem(h)
        for block in self.v_blocks:
            h = block(h)
        h = F.silu(self.v_norm(h)).mean(dim=(2, 3))
        return F.normalize(self.v_out(h), dim=-1)

    def embed_audio(self, window: torch.Tensor) -> torch.Tensor:
        """Embed a (B, 16, 80) mel window to a unit-norm vector."""
        if window.ndim != 3 or window.shape[1:] != (16, 80):
            raise ValueError(f"expected (B, 16, 80), got {tuple(window.shape)}")
        h = self.a_stem(window[:, None])
        for block in self.a_blocks:
            h = block(h)
        h = F.silu(self.a_norm(h)).mean(dim=(2, 3))
        return F.normalize(self.a_out(h), dim=-1)


def sync_prob(v: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
    """Clamped cosine similarity in (0, 1] between unit embeddings."""
    cos = (v * a).sum(dim=-1)
    return cos.clamp(PROB_FLOOR, 1.0)


def sync_loss(pred_frames: torch.Tensor, window: torch.Tensor,
              expert: SyncExpert) -> torch.Tensor:
    """-log p(sync) of a generated 5-frame sequence under the frozen expert."""
    v = expert.embed_video(pred_frames)
    a = expert.embed_audio(window)
    return -torch.log(sync_prob(v, a)).mean()


def bce_sync(p: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    return -(target * torch.log(p) + (1 - target) * torch.log(1 - p)).mean()


def _sample_pair(data, clip_ids, rng, size, min_offset):
    """One (frames, window, label) example; negatives are offset by at least
    ``min_offset`` frames or come from a different clip (50/50)."""
    cid = clip_ids[rng.integers(len(clip_ids))]
    n = data.n_frames(cid)
    s = int(rng.integers(0, n - SYNC_WINDOW + 1))
    frames = data.crops_float(cid, size)[s: s + SYNC_WINDOW]
    if rng.random() < 0.5:
        return frames, data.window(cid, s), 1.0
    if rng.random() < 0.5 and len(clip_ids) > 1:
        other = cid
        while other == cid:
            other = clip_ids[rng.integers(len(clip_ids))]
        n_o = data.n_frames(other)
        s_a = int(rng.integers(0, n_o - SYNC_WINDOW + 1))
        return frames, data.window(other, s_a), 0.0
    valid = [
        o
        for o in range(-(n - SYNC_WINDOW), n - SYNC_WINDOW + 1)
        if abs(o) >= min_offset and 0 <= s + o <= n - SYNC_WINDOW
    ]
    off = valid[rng.integers(len(valid))]
    return frames, data.window(cid, s + off), 0.0


def _make_batch(data, clip_ids, rng, size, min_offset, batch_size):
    frames, windows, labels = [], [], []
    for _ in range(batch_size):
        f, w, y = _sample_pair(data, clip_ids, rng, size, min_offset)
        frames.append(f)
        windows.append(w)
        labels.append(y)
    frames = torch.from_numpy(np.stack(frames)).permute(0, 1, 4, 2, 3)
    windows = torch.from_numpy(np.stack(windows))
    return frames, windows, torch.tensor(labels, dtype=torch.float32)


@torch.no_grad()
def held_out_accuracy(expert: SyncExpert, data, clip_ids, rng, size,
                      min_offset, n_pairs=256) -> float:
    expert.eval()
    frames, windows, labels = _make_batch(data, clip_ids, rng, size, min_offset, n_pairs)
    p = sync_prob(expert.embed_video(frames), expert.embed_audio(windows))
    pred = (p > 0.5).float()
    expert.train()
    return float((pred == labels).float().mean())


def train_expert(data, cfg: dict, log=None) -> tuple[SyncExpert, float]:
    """Train the expert contrastively; returns (best model, held-out accuracy).

    Stops when held-out accuracy has not improved for ``expert.patience``
    evaluations or after ``expert.max_steps`` optimizer steps.
    """
    size = cfg["expert.image_size"]
    min_offset = cfg["expert.min_offset"]
    torch.manual_seed(cfg["seed"])
    expert = SyncExpert(
        image_size=size,
        base_channels=cfg["expert.base_channels"],
        embed_dim=cfg["expert.embed_dim"],
    )
    opt = torch.optim.Adam(expert.parameters(), lr=cfg["expert.lr"])
    train_ids = data.split("train")
    val_ids = data.split("val") or train_ids

    rng = np.random.default_rng([cfg["seed"], 100])
    best_acc, best_state, stale = 0.0, None, 0
    for step in range(1, cfg["expert.max_steps"] + 1):
        frames, windows, labels = _make_batch(
            data, train_ids, rng, size, min_offset, cfg["expert.batch_size"]
        )
        p = sync_prob(expert.embed_video(frames), expert.embed_audio(windows))
        loss = bce_sync(p, labels)
        if not math.isfinite(float(loss)):
            raise RuntimeError(f"expert training diverged at step {step} (loss={loss})")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % cfg["expert.eval_every"] == 0:
            eval_rng = np.random.default_rng([cfg["seed"], 101])
            acc = held_out_accuracy(expert, data, val_ids, eval_rng, size, min_offset)
            if log:
                log(f"expert step {step}: loss {float(loss):.4f} val acc {acc:.3f}")
            if acc > best_acc + 1e-3:
                best_acc = acc
                best_state = {k: v.detach().clone() for k, v in expert.state_dict().items()}
                stale = 0
            else:
                stale += 1
                if stale >= cfg["expert.patience"]:
                    break
    if best_state is not None:
        expert.load_state_dict(best_state)
    return expert, best_acc
