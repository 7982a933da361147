"""Dominant token selection: global [CLS] attention fused with local affinity."""

from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, as_matrix, check_count
from .tensor_store import mean_and_variance, row_softmax, softmax


@dataclass(frozen=True)
class LtamParams:
    """Local-affinity window and kernel weights.

    ``w1`` scales the feature kernel, ``w2`` the position kernel and ``w3``
    weights the position term in the combined affinity.
    """

    kernel_size: int = 3
    w1: float = 0.3
    w2: float = 0.3
    w3: float = 0.5
    sigma_floor: float = 1e-6

    def __post_init__(self):
        k = self.kernel_size
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1 or k % 2 == 0:
            raise ValidationError(f"kernel_size must be an odd positive integer, got {k!r}")
        for name in ("w1", "w2"):
            w = getattr(self, name)
            # zero would divide the kernel by zero
            if not np.isfinite(w) or w <= 0:
                raise ValidationError(f"{name} must be finite and > 0, got {w!r}")
        if not np.isfinite(self.w3) or self.w3 < 0:
            raise ValidationError(f"w3 must be finite and >= 0, got {self.w3!r}")
        if not np.isfinite(self.sigma_floor) or self.sigma_floor <= 0:
            raise ValidationError(f"sigma_floor must be > 0, got {self.sigma_floor!r}")


def grid_coords(height, width):
    """Row-major (x, y) = (i // width, i % width) for every token index."""
    idx = np.arange(height * width)
    return np.stack([idx // width, idx % width], axis=1)


def cls_attention_from_qk(q_cls, keys, d_k=None):
    """Per-head [CLS] attention rows, ``softmax(q . k_i / sqrt(d_k))`` over tokens.

    ``q_cls`` is ``(H, d_k)`` and ``keys`` is ``(H, N, d_k)``.
    """
    q = as_matrix(q_cls, "q_cls")
    k = as_matrix(keys, "keys", ndim=3)
    if k.shape[0] != q.shape[0] or k.shape[2] != q.shape[1]:
        raise ValidationError(f"q_cls {q.shape} and keys {k.shape} disagree")
    d_k = q.shape[1] if d_k is None else d_k
    if d_k != q.shape[1]:
        raise ValidationError(f"d_k={d_k} does not match key dimension {q.shape[1]}")
    logits = np.einsum("hd,hnd->hn", q, k) / np.sqrt(d_k)
    return row_softmax(logits)


def check_cls_attention(attn, tol=1e-6):
    a = as_matrix(attn, "cls_attention")
    if (a < 0).any() or (a > 1).any():
        raise ValidationError("cls_attention: entries must lie in [0, 1]")
    dev = np.abs(a.sum(axis=1) - 1.0)
    if (dev > tol).any():
        raise ValidationError(f"cls_attention: row {int(dev.argmax())} does not sum to 1")
    return a


def global_scores(attn):
    """Head-averaged [CLS] attention, turned into a distribution with softmax."""
    a = check_cls_attention(attn)
    return softmax(a.sum(axis=0) / a.shape[0])


def _neighbour_pairs(coords, kernel_size):
    """Directed (p, q) index pairs with q inside p's window, q != p.

    Pairs come out grouped by window offset, offsets in row-major order.
    """
    coords = np.asarray(coords, dtype=np.int64)
    n = len(coords)
    lo = coords.min(axis=0)
    shape = coords.max(axis=0) - lo + 1
    board = np.full(tuple(shape), -1, dtype=np.int64)
    local = coords - lo
    board[local[:, 0], local[:, 1]] = np.arange(n)

    half = kernel_size // 2
    src, dst = [], []
    for dx in range(-half, half + 1):
        for dy in range(-half, half + 1):
            if dx == 0 and dy == 0:
                continue
            x, y = local[:, 0] + dx, local[:, 1] + dy
            inside = (x >= 0) & (x < shape[0]) & (y >= 0) & (y < shape[1])
            p = np.nonzero(inside)[0]
            q = board[x[inside], y[inside]]
            present = q >= 0
            src.append(p[present])
            dst.append(q[present])
    if not src:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(src), np.concatenate(dst)


def ltam_raw(features, coords, params=LtamParams()):
    """Mean combined affinity of each token to its window neighbours.

    Works on any set of distinct integer coordinates, so it also covers
    the sparse survivor set left after an earlier pruning pass; absent
    neighbours are skipped. Tokens with no neighbour score 0.
    """
    f = as_matrix(features, "features")
    coords = np.asarray(coords, dtype=np.int64)
    if coords.shape != (len(f), 2):
        raise ValidationError(f"coords shape {coords.shape} does not match {len(f)} tokens")
    src, dst = _neighbour_pairs(coords, params.kernel_size)
    raw = np.zeros(len(f))
    if len(src) == 0:
        return raw
    fdist = np.sqrt(((f[src] - f[dst]) ** 2).sum(axis=1))
    pdist = np.sqrt(((coords[src] - coords[dst]) ** 2).sum(axis=1).astype(np.float64))
    sigma_f = max(np.sqrt(mean_and_variance(fdist)[1]), params.sigma_floor)
    sigma_p = max(np.sqrt(mean_and_variance(pdist)[1]), params.sigma_floor)
    kappa = affinity(fdist, pdist, sigma_f, sigma_p, params)
    total = np.zeros(len(f))
    count = np.zeros(len(f))
    np.add.at(total, src, kappa)
    np.add.at(count, src, 1.0)
    has = count > 0
    raw[has] = total[has] / count[has]
    return raw


def affinity(fdist, pdist, sigma_f, sigma_p, params):
    k_feat = -((fdist / (params.w1 * sigma_f)) ** 2)
    k_pos = -((pdist / (params.w2 * sigma_p)) ** 2)
    return k_feat + params.w3 * k_pos


def ltam_scores(features, grid, params=LtamParams()):
    """Local-continuity scores for an ``(height, width)`` token grid."""
    f = as_matrix(features, "features")
    height, width = grid
    if height * width != len(f):
        raise ValidationError(f"grid {height}x{width} does not match {len(f)} tokens")
    return softmax(ltam_raw(f, grid_coords(height, width), params))


def ltam_scores_at(features, coords, params=LtamParams()):
    return softmax(ltam_raw(features, coords, params))


def adaptive_fuse(global_s, local_s, swap=False):
    """Variance-weighted convex combination of two score distributions.

    ``alpha = var(local) / (var(global) + var(local))`` weights the global
    scores. ``swap=True`` uses ``var(global)`` in the numerator instead.
    When both variances vanish the two inputs are uniform and alpha is 0.5.
    """
    g = as_matrix(global_s, "global scores", ndim=1)
    loc = as_matrix(local_s, "local scores", ndim=1)
    if g.shape != loc.shape:
        raise ValidationError(f"length mismatch: {g.shape} vs {loc.shape}")
    var_g = mean_and_variance(g)[1]
    var_l = mean_and_variance(loc)[1]
    denom = var_g + var_l
    if denom == 0:
        alpha = 0.5
    else:
        alpha = (var_g if swap else var_l) / denom
    return alpha * g + (1.0 - alpha) * loc, alpha


def top_k(scores, k):
    """Indices of the ``k`` largest scores, lowest index on ties, ascending."""
    s = as_matrix(scores, "scores", ndim=1)
    k = check_count(k, 0, len(s), "k")
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:k])


def select_dominant(scores, k):
    s = np.asarray(scores)
    check_count(k, 1, len(s), "K")
    return top_k(s, k)
