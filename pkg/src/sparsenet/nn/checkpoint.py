"""Checkpoint directories: manifest, raw tensor files and a mask bundle.

Tensor file layout (little-endian)::

    b"SPNT" | dtype code u32 | rank u32 | dims u64 * rank | values

with dtype codes 1 = float32, 2 = float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError
from ..topology import MaskBundle, load_bundle, save_bundle
from .model import Model, rebuild

MAGIC = b"SPNT"
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}
MASK_DIR = "masks"


def write_tensor(path, a: np.ndarray) -> None:
    a = np.asarray(a)
    dt = a.dtype.newbyteorder("<")
    if dt not in DTYPE_CODES:
        raise ValueError(f"unsupported tensor dtype {a.dtype}")
    header = MAGIC + struct.pack("<II", DTYPE_CODES[dt], a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(a, dtype=dt).tobytes())


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not an SPNT tensor file")
    code, rank = struct.unpack_from("<II", raw, 4)
    if code not in CODE_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    off = 12 + 8 * rank
    if len(raw) < off:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q", raw, 12)
    dt = CODE_DTYPES[code]
    want = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(raw) - off != want:
        raise FormatError(f"{path}: expected {want} data bytes, found {len(raw) - off}")
    return np.frombuffer(raw, dtype=dt, offset=off).reshape(dims).copy()


def save_checkpoint(model: Model, path, *, step: int = 0, config: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params = []
    for layer in model.weight_layers():
        for key, arr in layer.params().items():
            fname = f"{layer.name}.{key}.spnt"
            write_tensor(path / fname, arr)
            params.append({"layer": layer.name, "name": key, "file": fname})
    masked = [(l.name, l.mask) for l in model.weight_layers() if l.mask is not None]
    if masked:
        save_bundle(MaskBundle([m for _, m in masked], "pruned", {"source": "checkpoint"}, [n for n, _ in masked]), path / MASK_DIR)
    manifest = {
        "architecture": model.name,
        "architecture_config": model.config,
        "input_shape": list(model.input_shape),
        "seed": model.seed,
        "step": step,
        "dtype": str(model.dtype),
        "params": params,
        "masks": MASK_DIR if masked else None,
        "config": config or {},
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_checkpoint(path) -> tuple[Model, dict]:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{path}: no manifest.json") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid manifest ({exc})") from exc
    if "architecture" not in manifest or "params" not in manifest:
        raise FormatError(f"{path}: manifest is not a checkpoint manifest")
    masks = load_bundle(path / manifest["masks"]).by_name() if manifest.get("masks") else {}
    model = rebuild(
        manifest["architecture"], manifest.get("architecture_config", {}), manifest["input_shape"],
        manifest.get("seed") or 0, dtype=np.dtype(manifest.get("dtype", "float32")),
    )
    model.seed = manifest.get("seed")
    for entry in manifest["params"]:
        layer = model.layer(entry["layer"])
        arr = read_tensor(path / entry["file"])
        current = getattr(layer, entry["name"])
        if arr.shape != current.shape:
            raise ShapeError(f"{entry['file']}: shape {arr.shape} does not fit {layer.name}.{entry['name']} {current.shape}")
        setattr(layer, entry["name"], arr)
    # masks are attached after the weights so the zero check below is meaningful
    for name, m in masks.items():
        layer = model.layer(name)
        if m.shape != layer.weight.shape:
            raise ShapeError(f"mask for {name} has shape {m.shape}, weights {layer.weight.shape}")
        if np.any(layer.weight[~m.bits] != 0):
            raise FormatError(f"{path}: weights of {name} are nonzero at masked positions")
        layer.mask = m
    return model, manifest
