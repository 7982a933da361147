"""Dense f32 tensors on disk (VTTF), a portable RNG and the numeric primitives.

VTTF layout, little-endian::

    b"VTTF" | u8 version=1 | u8 dtype=0 (f32) | u8 rank | u8 reserved=0
    | rank x u64 dims | f32 payload, row-major

Arrays are stored as float32; all reductions accumulate in float64.
"""

import struct

import numpy as np

from ._validation import ValidationError, as_matrix, check_finite

MAGIC = b"VTTF"
VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sBBBB")


class TensorFormatError(ValueError):
    """A VTTF file could not be decoded. ``code`` identifies the failure."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def save_tensor(t, path):
    arr = np.ascontiguousarray(t, dtype="<f4")
    if not 1 <= arr.ndim <= 3:
        raise ValidationError(f"tensor rank must be 1..3, got {arr.ndim}")
    if arr.size == 0:
        raise ValidationError(f"tensor dims must be positive, got {arr.shape}")
    check_finite(arr, "tensor")
    with open(path, "wb") as fh:
        fh.write(dumps_tensor(arr))


def dumps_tensor(t):
    arr = np.ascontiguousarray(t, dtype="<f4")
    head = _HEADER.pack(MAGIC, VERSION, DTYPE_F32, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + dims + arr.tobytes(order="C")


def load_tensor(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    return loads_tensor(raw)


def loads_tensor(raw):
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise TensorFormatError("bad_magic", "bad magic: not a VTTF file")
    _, version, dtype, rank, reserved = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise TensorFormatError("version_mismatch", f"unsupported VTTF version {version}")
    if dtype != DTYPE_F32:
        raise TensorFormatError("bad_dtype", f"unsupported dtype code {dtype}")
    if not 1 <= rank <= 3 or reserved != 0:
        raise TensorFormatError("bad_header", f"invalid rank {rank} or reserved byte {reserved}")
    off = _HEADER.size
    if len(raw) < off + 8 * rank:
        raise TensorFormatError("payload_length_mismatch", "payload length mismatch: truncated dims")
    dims = struct.unpack_from(f"<{rank}Q", raw, off)
    off += 8 * rank
    if any(d == 0 for d in dims):
        raise TensorFormatError("bad_header", f"dims must be positive, got {dims}")
    count = int(np.prod(dims, dtype=object))
    if len(raw) - off != 4 * count:
        raise TensorFormatError(
            "payload_length_mismatch",
            f"payload length mismatch: expected {4 * count} bytes, found {len(raw) - off}",
        )
    arr = np.frombuffer(raw, dtype="<f4", offset=off, count=count).reshape(dims)
    if not np.isfinite(arr).all():
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        raise TensorFormatError("non_finite", f"non-finite payload value at index {idx}")
    return arr.astype(np.float32)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class Rng:
    """Counter-based SplitMix64 stream.

    Draw ``i`` of the stream is ``mix(seed + (i + 1) * golden)``, so output
    depends only on the seed and the draw order, never on the platform.
    """

    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._counter = 0

    def next_u64(self, n):
        i = np.arange(self._counter + 1, self._counter + 1 + n, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + i * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))

    def uniform(self, shape, low=0.0, high=1.0):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)

    def integers(self, low, high, shape=None):
        """Integers in [low, high); scalar when ``shape`` is None."""
        size = 1 if shape is None else int(np.prod(shape))
        out = low + (self.next_u64(size) % np.uint64(high - low)).astype(np.int64)
        return int(out[0]) if shape is None else out.reshape(shape)


def row_softmax(m):
    """Stable softmax along the last axis of a rank-2 matrix, in float64."""
    x = as_matrix(m, "row_softmax input")
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax(v):
    return row_softmax(np.asarray(v, dtype=np.float64)[None, :])[0]


def mean_and_variance(v):
    """Mean and population variance of a rank-1 vector."""
    x = as_matrix(v, "mean_and_variance input", ndim=1)
    if x.size == 0:
        raise ValidationError("mean_and_variance: empty input")
    mean = float(x.sum() / x.size)
    var = float(((x - mean) ** 2).sum() / x.size)
    return mean, var
