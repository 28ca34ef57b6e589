"""Dense and CSR matrix primitives, binary sparsity patterns and seeded RNG.

Dense matrices are plain 2-D ``numpy`` arrays. ``CsrMatrix`` is a small
validated container; its product with a dense matrix runs through a numba
kernel with a fixed per-row accumulation order.

Random streams come from ``make_rng``, which always builds a Philox
(counter-based) generator from a ``SeedSequence``. Sub-streams are derived
by name (``make_rng(seed, "init")``, ``make_rng(seed, "shuffle")``) so no
code path ever touches a global generator.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import FormatError, ShapeError

DEFAULT_DTYPE = np.float32
INIT_SCHEMES = ("he-normal", "glorot-uniform")


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"seed components must be non-negative, got {key}")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and an optional stream path.

    Identical ``(seed, *keys)`` tuples give identical streams; different
    key paths give statistically independent ones.
    """
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


# ---------------------------------------------------------------------------
# sparsity patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Binary connectivity mask; ``True`` marks a weight that exists."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.dtype != np.bool_:
            if not np.all((bits == 0) | (bits == 1)):
                raise ValueError("mask entries must be 0 or 1")
            bits = bits.astype(np.bool_)
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def ones(cls, shape) -> "SparsityPattern":
        return cls(np.ones(shape, dtype=np.bool_))

    @classmethod
    def zeros(cls, shape) -> "SparsityPattern":
        return cls(np.zeros(shape, dtype=np.bool_))

    @property
    def shape(self) -> tuple:
        return self.bits.shape

    @property
    def size(self) -> int:
        return int(self.bits.size)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def sparsity(self) -> float:
        if self.size == 0:
            return 0.0
        return 1.0 - self.nnz / self.size

    def __eq__(self, other):
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.shape, self.bits.tobytes()))

    def issubset(self, other: "SparsityPattern") -> bool:
        """True when every kept entry of ``self`` is also kept in ``other``."""
        if self.shape != other.shape:
            raise ShapeError(f"mask shapes differ: {self.shape} vs {other.shape}")
        return not bool(np.any(self.bits & ~other.bits))

    def __repr__(self):
        return f"SparsityPattern(shape={self.shape}, nnz={self.nnz}, sparsity={self.sparsity:.4f})"


def apply_mask(w: np.ndarray, mask: SparsityPattern) -> np.ndarray:
    """Zero every weight the mask marks absent. Returns a new array."""
    w = np.asarray(w)
    if w.shape != mask.shape:
        raise ShapeError(f"weight shape {w.shape} does not match mask shape {mask.shape}")
    return np.where(mask.bits, w, np.zeros((), dtype=w.dtype))


# ---------------------------------------------------------------------------
# dense kernels
# ---------------------------------------------------------------------------


def _as_matrix(a, name):
    a = np.asarray(a)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def dense_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


# ---------------------------------------------------------------------------
# CSR
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values))

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1]) if len(self.row_ptr) else 0

    @property
    def shape(self) -> tuple:
        return (self.rows, self.cols)

    @property
    def dtype(self):
        return self.values.dtype

    def validate(self) -> None:
        """Raise ``FormatError`` if any CSR invariant is violated."""
        rp, ci, v = self.row_ptr, self.col_idx, self.values
        if self.rows < 0 or self.cols < 0:
            raise FormatError("negative dimensions")
        if rp.shape != (self.rows + 1,):
            raise FormatError(f"row_ptr must have length rows+1={self.rows + 1}, got {rp.shape[0]}")
        if rp[0] != 0:
            raise FormatError("row_ptr[0] must be 0")
        if np.any(np.diff(rp) < 0):
            raise FormatError("row_ptr must be non-decreasing")
        nnz = int(rp[-1])
        if ci.shape != (nnz,) or v.shape != (nnz,):
            raise FormatError(f"col_idx/values length must equal nnz={nnz}")
        if nnz:
            if ci.min() < 0 or ci.max() >= self.cols:
                raise FormatError("column index out of range")
            # strictly increasing inside each row: a non-increase is only allowed at a row start
            steps = np.diff(ci) <= 0
            row_starts = np.zeros(nnz, dtype=bool)
            row_starts[rp[1:-1][rp[1:-1] < nnz]] = True
            if np.any(steps & ~row_starts[1:]):
                raise FormatError("column indices must be strictly increasing within a row")
            if np.any(v == 0):
                raise FormatError("explicitly stored zero value")

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def csr_from_dense(d: np.ndarray, tol: float = 0.0) -> CsrMatrix:
    """Compress ``d``, dropping entries with ``|value| <= tol``."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    d = _as_matrix(d, "d")
    keep = np.abs(d) > tol
    counts = keep.sum(axis=1)
    row_ptr = np.zeros(d.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    r, c = np.nonzero(keep)  # row-major order, so columns ascend within a row
    return CsrMatrix(d.shape[0], d.shape[1], row_ptr, c, d[r, c])


def csr_from_mask(weights: np.ndarray, mask: SparsityPattern) -> CsrMatrix:
    """CSR of ``weights`` restricted to the mask's kept positions.

    Kept positions whose weight happens to be exactly zero are dropped, so
    the result still satisfies the no-stored-zeros invariant.
    """
    weights = _as_matrix(weights, "weights")
    if weights.shape != mask.shape:
        raise ShapeError(f"weight shape {weights.shape} does not match mask shape {mask.shape}")
    return csr_from_dense(np.where(mask.bits, weights, 0), 0.0)


def csr_to_dense(m: CsrMatrix) -> np.ndarray:
    m.validate()
    out = np.zeros((m.rows, m.cols), dtype=m.values.dtype)
    rows = np.repeat(np.arange(m.rows), np.diff(m.row_ptr))
    out[rows, m.col_idx] = m.values
    return out


@numba.njit(cache=True, nogil=True)
def _spmm_kernel(row_ptr, col_idx, values, b, out):
    n_cols = b.shape[1]
    for i in range(row_ptr.shape[0] - 1):
        for p in range(row_ptr[i], row_ptr[i + 1]):
            v = values[p]
            j = col_idx[p]
            for k in range(n_cols):
                out[i, k] += v * b[j, k]


def spmm(a: CsrMatrix, b: np.ndarray) -> np.ndarray:
    """Sparse (CSR) times dense product.

    Each output row accumulates its nonzeros in ascending column order, so
    results are bit-reproducible run to run.
    """
    b = _as_matrix(b, "b")
    if a.cols != b.shape[0]:
        raise ShapeError(f"cannot multiply CSR {a.shape} by {b.shape}")
    dtype = np.result_type(a.values.dtype, b.dtype)
    out = np.zeros((a.rows, b.shape[1]), dtype=dtype)
    if a.nnz and b.shape[1]:
        _spmm_kernel(
            a.row_ptr, a.col_idx, a.values.astype(dtype, copy=False),
            np.ascontiguousarray(b, dtype=dtype), out,
        )
    return out


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def fans(shape) -> tuple[int, int]:
    """Fan-in/fan-out for a weight tensor.

    FC weights are stored ``(in, out)``; conv kernels ``(out, in, kh, kw)``.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[0], shape[1]
    receptive = math.prod(shape[2:])
    return shape[1] * receptive, shape[0] * receptive


def init_weights(shape, rng: np.random.Generator, scheme: str = "he-normal", dtype=DEFAULT_DTYPE) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if not shape or math.prod(shape) == 0:
        raise ShapeError(f"cannot initialise empty shape {shape}")
    fan_in, fan_out = fans(shape)
    if scheme == "he-normal":
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
    elif scheme == "glorot-uniform":
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=shape)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    return w.astype(dtype)
