"""Sparse connectivity generators and topology bundles.

A RadiX-Net is built from a mixed radix ``N = (N_1..N_L)`` and a block list
``B = (B_1..B_{L+1})``. Neuron indices of the base graph are written in
mixed radix, least-significant digit first (digit ``j`` in base ``N_j``).
Base layer ``l`` connects ``u`` to ``v`` iff their digits agree everywhere
except position ``l``. Each base adjacency is then Kronecker-expanded with an
all-ones ``B_l x B_{l+1}`` block, neuron ``u * B + i`` being copy ``i`` of
base neuron ``u``.

Bundles on disk are a directory holding ``manifest.json`` plus one Matrix
Market ``coordinate pattern`` file per mask.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .linalg import SparsityPattern

MAX_MASK_ENTRIES = 2**24
MANIFEST = "manifest.json"
GENERATORS = ("radix", "random", "pruned", "dense")


@dataclass(frozen=True)
class RadixSpec:
    radices: tuple[int, ...]
    blocks: tuple[int, ...]

    def __post_init__(self):
        radices = tuple(int(n) for n in self.radices)
        blocks = tuple(int(b) for b in self.blocks)
        object.__setattr__(self, "radices", radices)
        object.__setattr__(self, "blocks", blocks)
        if not radices:
            raise ValueError("at least one radix is required")
        if len(blocks) != len(radices) + 1:
            raise ValueError(f"need len(blocks) == len(radices) + 1, got {len(blocks)} and {len(radices)}")
        if min(radices) < 1 or min(blocks) < 1:
            raise ValueError("radices and blocks must all be >= 1")

    @property
    def base_size(self) -> int:
        return math.prod(self.radices)


@dataclass(eq=False)
class LayeredTopology:
    layer_sizes: list[int]
    masks: list[SparsityPattern]

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if len(self.masks) != len(self.layer_sizes) - 1:
            raise ShapeError(
                f"{len(self.layer_sizes)} layers need {len(self.layer_sizes) - 1} masks, got {len(self.masks)}"
            )
        for i, m in enumerate(self.masks):
            want = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if m.shape != want:
                raise ShapeError(f"mask {i} has shape {m.shape}, expected {want}")

    @property
    def layer_sparsities(self) -> list[float]:
        return [m.sparsity for m in self.masks]

    @property
    def sparsity(self) -> float:
        total = sum(m.size for m in self.masks)
        return 1.0 - sum(m.nnz for m in self.masks) / total if total else 0.0

    def __eq__(self, other):
        if not isinstance(other, LayeredTopology):
            return NotImplemented
        return self.layer_sizes == other.layer_sizes and self.masks == other.masks


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _digits(spec: RadixSpec) -> np.ndarray:
    """(N*, L) digit table, least-significant digit first."""
    idx = np.arange(spec.base_size)
    out = np.empty((spec.base_size, len(spec.radices)), dtype=np.int64)
    for j, n in enumerate(spec.radices):
        out[:, j] = idx % n
        idx = idx // n
    return out


def radix_base_adjacency(spec: RadixSpec, layer: int) -> np.ndarray:
    """Boolean N* x N* adjacency of base layer ``layer`` (1-based)."""
    digits = _digits(spec)
    others = np.delete(digits, layer - 1, axis=1)
    # pack the untouched digits into one key per neuron; equal keys <=> connected
    key = np.zeros(spec.base_size, dtype=np.int64)
    for col in others.T:
        key = key * (int(col.max()) + 1) + col
    return key[:, None] == key[None, :]


def radix_net(spec: RadixSpec, max_entries: int = MAX_MASK_ENTRIES) -> LayeredTopology:
    n_star = spec.base_size
    sizes = [n_star * b for b in spec.blocks]
    for i in range(len(spec.radices)):
        entries = sizes[i] * sizes[i + 1]
        if entries > max_entries:
            raise OverflowError(
                f"mask {i} would have {entries} entries (> limit {max_entries}); raise max_entries to allow it"
            )
    masks = []
    for layer in range(1, len(spec.radices) + 1):
        base = radix_base_adjacency(spec, layer)
        block = np.ones((spec.blocks[layer - 1], spec.blocks[layer]), dtype=np.bool_)
        masks.append(SparsityPattern(np.kron(base, block)))
    return LayeredTopology(sizes, masks)


def random_mask(rows: int, cols: int, s: float, rng: np.random.Generator) -> SparsityPattern:
    """Each entry kept independently with probability ``1 - s``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"sparsity must lie in [0, 1], got {s}")
    return SparsityPattern(rng.random((rows, cols)) < 1.0 - s)


def random_topology(layer_sizes, sparsities, rng: np.random.Generator) -> LayeredTopology:
    layer_sizes = list(layer_sizes)
    if np.isscalar(sparsities):
        sparsities = [float(sparsities)] * (len(layer_sizes) - 1)
    masks = [random_mask(a, b, s, rng) for a, b, s in zip(layer_sizes[:-1], layer_sizes[1:], sparsities)]
    return LayeredTopology(layer_sizes, masks)


def trim_inputs(t: LayeredTopology, k: int) -> LayeredTopology:
    """Drop the ``k`` highest-index neurons of the input layer."""
    if k < 0 or k >= t.layer_sizes[0]:
        raise ValueError(f"cannot trim {k} of {t.layer_sizes[0]} input neurons")
    if k == 0:
        return LayeredTopology(list(t.layer_sizes), list(t.masks))
    first = SparsityPattern(t.masks[0].bits[: t.layer_sizes[0] - k])
    return LayeredTopology([t.layer_sizes[0] - k] + t.layer_sizes[1:], [first] + list(t.masks[1:]))


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------


def path_count_matrix(t: LayeredTopology) -> np.ndarray:
    """Number of distinct input-to-output paths for every (input, output) pair."""
    if not t.masks:
        raise ShapeError("topology has no masks")
    # float64 products are exact while counts stay below 2**53
    acc = t.masks[0].bits.astype(np.float64)
    for m in t.masks[1:]:
        if acc.shape[1] != m.shape[0]:
            raise ShapeError(f"shape chain broken: {acc.shape} then {m.shape}")
        acc = acc @ m.bits.astype(np.float64)
    if acc.size and acc.max() >= 2.0**53:
        raise OverflowError("path counts exceed exact float64 range")
    return acc.astype(np.int64)


def is_fully_path_connected(t: LayeredTopology) -> bool:
    return bool(np.all(path_count_matrix(t) > 0))


def scale_plan(base_layer_sizes, mode: str, factor: float):
    """Layer sizes and per-layer sparsities for a scaled sparse variant.

    ``fixed-connections`` multiplies hidden widths by ``factor`` and picks the
    sparsity that keeps each layer's expected connection count at the dense
    baseline. ``fixed-neurons`` keeps widths and divides every layer's
    connection count by ``factor``.
    """
    base = [int(n) for n in base_layer_sizes]
    if len(base) < 2:
        raise ValueError("need at least an input and an output layer")
    if factor <= 0:
        raise ValueError("factor must be positive")
    if mode == "fixed-connections":
        sizes = [base[0]] + [int(round(n * factor)) for n in base[1:-1]] + [base[-1]]
        sparsities = [1.0 - (a * b) / (a2 * b2) for a, b, a2, b2 in zip(base[:-1], base[1:], sizes[:-1], sizes[1:])]
    elif mode == "fixed-neurons":
        sizes = list(base)
        sparsities = [1.0 - 1.0 / factor] * (len(base) - 1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for s in sparsities:
        if not -1e-12 <= s <= 1.0:
            raise ValueError(f"plan yields sparsity {s} outside [0, 1]")
    return sizes, [max(0.0, s) for s in sparsities]


# ---------------------------------------------------------------------------
# Matrix Market pattern files
# ---------------------------------------------------------------------------

MM_HEADER = "%%MatrixMarket matrix coordinate pattern general"


def write_mtx_pattern(path, bits: np.ndarray) -> None:
    bits = np.asarray(bits, dtype=np.bool_)
    if bits.ndim != 2:
        raise ShapeError("Matrix Market pattern files hold 2-D masks")
    r, c = np.nonzero(bits)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(MM_HEADER + "\n")
        fh.write(f"{bits.shape[0]} {bits.shape[1]} {len(r)}\n")
        if len(r):
            np.savetxt(fh, np.column_stack([r + 1, c + 1]), fmt="%d")


def read_mtx_pattern(path) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip().lower() != MM_HEADER.lower():
        raise FormatError(f"{path}: missing '{MM_HEADER}' header")
    body = [ln for ln in lines[1:] if ln.strip() and not ln.startswith("%")]
    if not body:
        raise FormatError(f"{path}: missing dimensions line")
    try:
        rows, cols, nnz = (int(x) for x in body[0].split())
    except ValueError as exc:
        raise FormatError(f"{path}: bad dimensions line {body[0]!r}") from exc
    entries = body[1:]
    if len(entries) != nnz:
        raise ShapeError(f"{path}: header declares {nnz} entries, found {len(entries)}")
    bits = np.zeros((rows, cols), dtype=np.bool_)
    if nnz:
        try:
            ij = np.array([ln.split() for ln in entries], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"{path}: malformed entry line") from exc
        if ij.ndim != 2 or ij.shape[1] != 2:
            raise FormatError(f"{path}: entries must be 'row col' pairs")
        if ij.min() < 1 or ij[:, 0].max() > rows or ij[:, 1].max() > cols:
            raise ShapeError(f"{path}: entry index outside {rows}x{cols}")
        bits[ij[:, 0] - 1, ij[:, 1] - 1] = True
        if np.count_nonzero(bits) != nnz:
            raise FormatError(f"{path}: duplicate entries")
    return bits


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class MaskBundle:
    """Masks as stored on disk, possibly for non-chain (e.g. conv) layers.

    ``names`` identifies the model layer each mask belongs to (may be empty
    for a bare topology). ``layer_sizes`` is set only when the masks form an
    FC chain.
    """

    masks: list[SparsityPattern]
    generator: str
    spec: dict = field(default_factory=dict)
    names: list[str] = field(default_factory=list)
    layer_sizes: list[int] | None = None

    def topology(self) -> LayeredTopology:
        if self.layer_sizes is None:
            raise FormatError("bundle does not describe a layered FC topology")
        return LayeredTopology(self.layer_sizes, self.masks)

    def by_name(self) -> dict[str, SparsityPattern]:
        if len(self.names) != len(self.masks):
            raise FormatError("bundle masks are not associated with layer names")
        return dict(zip(self.names, self.masks))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_bundle(bundle: MaskBundle, path) -> Path:
    if bundle.generator not in GENERATORS:
        raise ValueError(f"generator must be one of {GENERATORS}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files, shapes, checksums = [], [], []
    for i, m in enumerate(bundle.masks):
        name = f"mask_{i}.mtx"
        bits = m.bits if m.bits.ndim == 2 else m.bits.reshape(m.shape[0], -1)
        write_mtx_pattern(path / name, bits)
        files.append(name)
        shapes.append(list(m.shape))
        checksums.append(_sha256(path / name))
    manifest = {
        "layer_sizes": bundle.layer_sizes,
        "masks": files,
        "generator": bundle.generator,
        "spec": bundle.spec,
        "shapes": shapes,
        "names": list(bundle.names),
        "sha256": checksums,
    }
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_bundle(path) -> MaskBundle:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{path}: no {MANIFEST}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path / MANIFEST}: invalid JSON ({exc})") from exc
    for key in ("layer_sizes", "masks", "generator"):
        if key not in manifest:
            raise FormatError(f"{path / MANIFEST}: missing field {key!r}")
    files = manifest["masks"]
    shapes = manifest.get("shapes") or [None] * len(files)
    checksums = manifest.get("sha256") or [None] * len(files)
    if not len(shapes) == len(checksums) == len(files):
        raise FormatError(f"{path / MANIFEST}: per-mask lists differ in length")
    masks = []
    for name, shape, digest in zip(files, shapes, checksums):
        f = path / name
        if not f.exists():
            raise FormatError(f"{f}: missing mask file")
        if digest is not None and _sha256(f) != digest:
            raise FormatError(f"{f}: checksum mismatch")
        bits = read_mtx_pattern(f)
        if shape is not None:
            if math.prod(shape) != bits.size or shape[0] != bits.shape[0]:
                raise ShapeError(f"{f}: stored {bits.shape} incompatible with declared shape {shape}")
            bits = bits.reshape(shape)
        masks.append(SparsityPattern(bits))
    layer_sizes = manifest["layer_sizes"]
    bundle = MaskBundle(
        masks=masks,
        generator=manifest["generator"],
        spec=manifest.get("spec") or {},
        names=list(manifest.get("names") or []),
        layer_sizes=None if layer_sizes is None else [int(n) for n in layer_sizes],
    )
    if bundle.layer_sizes is not None:
        bundle.topology()  # validates the chain
    return bundle


def save_topology(t: LayeredTopology, path, generator: str = "radix", spec: dict | None = None, names=()) -> Path:
    return save_bundle(MaskBundle(list(t.masks), generator, dict(spec or {}), list(names), list(t.layer_sizes)), path)


def load_topology(path) -> LayeredTopology:
    return load_bundle(path).topology()
