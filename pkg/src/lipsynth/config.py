"""Flat dotted-key run configuration.

Configs are plain dicts with dotted keys ("loss.lambda_sync").  Resolution
order: built-in defaults < JSON config file < CLI flags.  The merged result
is persisted with every run so any run can be reproduced from its echo.
The ``D2L_SEED`` environment variable overrides ``seed`` globally.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

DEFAULTS: dict = {
    "seed": 0,
    # denoiser backbone
    "model.image_size": 64,
    "model.base_channels": 64,
    "model.channel_mults": [1, 2, 3],
    "model.attention_levels": [1, 2],
    "model.embed_dim": 256,
    "model.blocks_per_level": 2,
    "model.norm_groups": 8,
    "model.audio_base_channels": 32,
    "model.fusion": "sum",
    # diffusion schedule
    "diffusion.T": 1000,
    "diffusion.beta_start": 1e-4,
    "diffusion.beta_end": 0.02,
    # loss weights
    "loss.lambda_l2": 1.0,
    "loss.lambda_sync": 0.03,
    "loss.lambda_lpips": 1.0,
    "loss.lambda_gan": 0.01,
    # training
    "train.batch_size": 2,
    "train.steps": 2000,
    "train.lr": 1e-4,
    "train.ema_rate": 0.9999,
    "train.checkpoint_every": 500,
    "train.disc_lr": 1e-4,
    "train.num_threads": 0,  # 0 = leave torch defaults
    # sync expert
    "expert.embed_dim": 128,
    "expert.base_channels": 32,
    "expert.image_size": 64,
    "expert.batch_size": 32,
    "expert.lr": 1e-3,
    "expert.max_steps": 4000,
    "expert.eval_every": 200,
    "expert.patience": 5,
    "expert.min_offset": 5,
    # feature extractor (perceptual loss / feature-Frechet)
    "features.seed": 1234,
    "features.base_channels": 16,
    # inference
    "infer.steps": 25,
    "infer.renoise_known": False,
    # audio
    "audio.centered_windows": False,
}

ABLATIONS = {
    "reconstruction": {
        "loss.lambda_l2": 0.0,
        "loss.lambda_sync": 0.0,
        "loss.lambda_lpips": 0.0,
        "loss.lambda_gan": 0.0,
    },
    "sync": {
        "loss.lambda_lpips": 0.0,
        "loss.lambda_gan": 0.0,
    },
    "perceptual": {
        "loss.lambda_gan": 0.0,
    },
    "gan": {},
}


def load_config(path=None, overrides: dict | None = None,
                ablation: str | None = None) -> dict:
    """Merge defaults, an optional JSON file, an ablation preset, and
    explicit overrides (in that order).  Unknown keys are rejected."""
    cfg = dict(DEFAULTS)
    if path is not None:
        loaded = json.loads(Path(path).read_text())
        _merge(cfg, loaded, source=str(path))
    if ablation is not None:
        if ablation not in ABLATIONS:
            raise ValueError(
                f"unknown ablation '{ablation}', choose from {sorted(ABLATIONS)}"
            )
        _merge(cfg, ABLATIONS[ablation], source=f"ablation '{ablation}'")
        cfg["ablation"] = ablation
    if overrides:
        _merge(cfg, overrides, source="flags")
    env_seed = os.environ.get("D2L_SEED")
    if env_seed is not None:
        cfg["seed"] = int(env_seed)
    return cfg


def _merge(cfg: dict, updates: dict, source: str) -> None:
    for key, value in updates.items():
        if key not in DEFAULTS and key != "ablation":
            raise KeyError(f"unknown config key '{key}' from {source}")
        cfg[key] = value


def save_config(path, cfg: dict) -> None:
    Path(path).write_text(json.dumps(cfg, indent=1, sort_keys=True))
