"""Checkpoint directories: a JSON manifest plus one raw float32 blob per tensor.

The manifest carries the config snapshot, step counter, optional role tag,
and a named tensor index (file, shape).  Loading is strict: a blob whose
byte count disagrees with its declared shape fails, naming the tensor.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

MANIFEST_NAME = "manifest.json"


def save_checkpoint(directory, tensors: dict, *, config: dict | None = None,
                    step: int = 0, role: str | None = None,
                    extra: dict | None = None) -> None:
    """Write ``tensors`` (numpy arrays or torch tensors) to ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {}
    for i, (name, tensor) in enumerate(sorted(tensors.items())):
        if isinstance(tensor, torch.Tensor):
            array = tensor.detach().cpu().numpy()
        else:
            array = np.asarray(tensor)
        array = np.ascontiguousarray(array, dtype="<f4")
        fname = f"tensor_{i:05d}.f32"
        (directory / fname).write_bytes(array.tobytes(order="C"))
        index[name] = {"file": fname, "shape": list(array.shape)}
    manifest = {
        "step": step,
        "tensors": index,
    }
    if config is not None:
        manifest["config"] = config
    if role is not None:
        manifest["role"] = role
    if extra:
        manifest.update(extra)
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_checkpoint(directory) -> tuple[dict, dict]:
    """Read back (tensors, manifest); tensors are float32 numpy arrays."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    tensors = {}
    for name, entry in manifest["tensors"].items():
        shape = tuple(entry["shape"])
        raw = (directory / entry["file"]).read_bytes()
        expected = int(np.prod(shape, dtype=np.int64)) * 4
        if len(raw) != expected:
            raise ValueError(
                f"tensor '{name}' ({entry['file']}): expected {expected} bytes "
                f"for shape {shape}, got {len(raw)}"
            )
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return tensors, manifest


def state_dict_to_tensors(module: torch.nn.Module, prefix: str = "") -> dict:
    return {prefix + k: v for k, v in module.state_dict().items()}


def load_state_dict_from_tensors(module: torch.nn.Module, tensors: dict,
                                 prefix: str = "") -> None:
    """Load ``module`` weights from a checkpoint tensor dict, validating shapes."""
    state = {}
    own = module.state_dict()
    for k, v in own.items():
        name = prefix + k
        if name not in tensors:
            raise KeyError(f"checkpoint is missing tensor '{name}'")
        arr = tensors[name]
        if tuple(arr.shape) != tuple(v.shape):
            raise ValueError(
                f"tensor '{name}': checkpoint shape {tuple(arr.shape)} does not "
                f"match module shape {tuple(v.shape)}"
            )
        state[k] = torch.from_numpy(arr).to(v.dtype)
    module.load_state_dict(state)
