"""Training objectives: masked reconstruction, perceptual distance, sync
expert penalty, and the 5-frame sequence adversarial pair.

The perceptual distance uses a frozen randomly-initialized strided conv
stack as its feature extractor (seed recorded in every run manifest); any
external extractor can be swapped in through the checkpoint interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

SEQ_LEN = 5


@dataclass(frozen=True)
class LossWeights:
    lambda_l2: float = 1.0
    lambda_sync: float = 0.03
    lambda_lpips: float = 1.0
    lambda_gan: float = 0.01

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")

    @staticmethod
    def from_config(cfg: dict) -> "LossWeights":
        return LossWeights(
            lambda_l2=cfg["loss.lambda_l2"],
            lambda_sync=cfg["loss.lambda_sync"],
            lambda_lpips=cfg["loss.lambda_lpips"],
            lambda_gan=cfg["loss.lambda_gan"],
        )


def masked_mse(a: torch.Tensor, b: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error over the masked region only."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    m = mask.to(a.dtype)
    weight = m.expand_as(a).sum()
    if float(weight) == 0.0:
        raise ValueError("mask is empty")
    return (((a - b) ** 2) * m).sum() / weight


l_simple = masked_mse
l2_x0 = masked_mse


class FeatureExtractor(nn.Module):
    """Frozen 4-layer strided conv feature pyramid with a fixed init seed."""

    def __init__(self, base_channels: int = 16, seed: int = 1234):
        super().__init__()
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        c = base_channels
        widths = [3, c, 2 * c, 4 * c, 8 * c]
        self.convs = nn.ModuleList(
            [nn.Conv2d(widths[i], widths[i + 1], 3, stride=2, padding=1) for i in range(4)]
        )
        for conv in self.convs:
            nn.init.kaiming_normal_(conv.weight, generator=gen)
            nn.init.zeros_(conv.bias)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = x
        for conv in self.convs:
            h = F.silu(conv(h))
            feats.append(h)
        return feats

    def pooled(self, x: torch.Tensor, layers=(1, 2, 3)) -> torch.Tensor:
        """Spatially pooled activations of the chosen layers, concatenated."""
        feats = self.forward(x)
        return torch.cat([feats[i].mean(dim=(2, 3)) for i in layers], dim=-1)


def l_perceptual(x0_hat: torch.Tensor, x0: torch.Tensor,
                 extractor: FeatureExtractor, layers=(1, 2, 3)) -> torch.Tensor:
    """Sum over layers of the mean squared distance between channel-unit-
    normalized activations (full frames, masked region already composited)."""
    feats_a = extractor(x0_hat)
    feats_b = extractor(x0)
    total = x0_hat.new_zeros(())
    for i in layers:
        fa = F.normalize(feats_a[i], dim=1)
        fb = F.normalize(feats_b[i], dim=1)
        total = total + ((fa - fb) ** 2).mean()
    return total


class SequenceDiscriminator(nn.Module):
    """Patch discriminator over a 5-frame channel stack; outputs a logit grid."""

    def __init__(self, base_channels: int = 64, norm_groups: int = 8):
        super().__init__()
        c = base_channels
        self.net = nn.Sequential(
            nn.Conv2d(3 * SEQ_LEN, c, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c, 2 * c, 4, stride=2, padding=1),
            nn.GroupNorm(norm_groups, 2 * c),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * c, 4 * c, 4, stride=2, padding=1),
            nn.GroupNorm(norm_groups, 4 * c),
            nn.LeakyReLU(0.2),
            nn.Conv2d(4 * c, 1, 4, stride=1, padding=1),
        )

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.ndim == 5:
            if seq.shape[1] != SEQ_LEN or seq.shape[2] != 3:
                raise ValueError(f"expected (B, {SEQ_LEN}, 3, H, W), got {tuple(seq.shape)}")
            seq = seq.reshape(seq.shape[0], SEQ_LEN * 3, *seq.shape[3:])
        return self.net(seq)


def disc_loss(disc: SequenceDiscriminator, real_seq: torch.Tensor,
              fake_seq: torch.Tensor) -> torch.Tensor:
    """-E[log D(real)] - E[log(1 - D(fake))], averaged over patches."""
    real_logits = disc(real_seq)
    fake_logits = disc(fake_seq)
    if not torch.isfinite(real_logits).all() or not torch.isfinite(fake_logits).all():
        raise RuntimeError("discriminator produced non-finite logits")
    real_term = F.binary_cross_entropy_with_logits(real_logits, torch.ones_like(real_logits))
    fake_term = F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits))
    return real_term + fake_term


def gen_adv_loss(disc: SequenceDiscriminator, fake_seq: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator loss: -E[log D(fake)]."""
    logits = disc(fake_seq)
    if not torch.isfinite(logits).all():
        raise RuntimeError("discriminator produced non-finite logits")
    return F.binary_cross_entropy_with_logits(logits, torch.ones_like(logits))


def total_loss(parts: dict, weights: LossWeights) -> torch.Tensor:
    """simple + l2*L2 + sync*Lsync + lpips*Llpips + gan*Lgan."""
    total = parts["simple"]
    total = total + weights.lambda_l2 * parts.get("l2", 0.0)
    total = total + weights.lambda_sync * parts.get("sync", 0.0)
    total = total + weights.lambda_lpips * parts.get("lpips", 0.0)
    total = total + weights.lambda_gan * parts.get("gan", 0.0)
    return total
