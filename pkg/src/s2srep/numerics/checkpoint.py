"""Parameter checkpoints: an uncompressed ``.npz`` plus a JSON header.

The header records the model kind and its configuration; every parameter is
stored as ``param/<name>`` with its own shape. Float64 arrays round-trip
bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(path, kind: str, config: dict, params: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "shapes": {k: list(v.shape) for k, v in params.items()},
    }
    arrays = {f"param/{k}": np.asarray(v, dtype=np.float64) for k, v in params.items()}
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(z["header"].tobytes().decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
        params = {k[len("param/"):]: z[k].copy() for k in z.files if k.startswith("param/")}
    for name, shape in header["shapes"].items():
        if list(params[name].shape) != shape:
            raise ValueError(f"checkpoint parameter {name!r} has shape {params[name].shape}, "
                             f"header says {shape}")
    return header["kind"], header["config"], params
