"""Brute-force reference implementations used to check the vectorised code.

Everything here is plain Python over nested lists with ``math`` and
``fractions``; nothing is shared with the main implementations.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from .tensor_store import Rng


def _softmax(xs):
    mx = max(xs)
    es = [math.exp(x - mx) for x in xs]
    z = math.fsum(es)
    return [e / z for e in es]


def _dist(a, b):
    return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(a, b)))


def _pop_std(xs):
    mu = math.fsum(xs) / len(xs)
    return math.sqrt(math.fsum((x - mu) ** 2 for x in xs) / len(xs))


def brute_force_ltam(features, grid, kernel_size=3, w1=0.3, w2=0.3, w3=0.5, sigma_floor=1e-6):
    """Local-affinity scores by enumerating every window pair token by token."""
    height, width = grid
    feats = [list(map(float, row)) for row in features]
    half = kernel_size // 2
    neigh = []
    for i in range(height * width):
        x, y = divmod(i, width)
        ns = []
        for u in range(x - half, x + half + 1):
            for v in range(y - half, y + half + 1):
                if (u, v) != (x, y) and 0 <= u < height and 0 <= v < width:
                    ns.append((u, v))
        neigh.append(ns)

    fd, pd = [], []
    for i, ns in enumerate(neigh):
        x, y = divmod(i, width)
        for u, v in ns:
            fd.append(_dist(feats[i], feats[u * width + v]))
            pd.append(_dist((x, y), (u, v)))
    sf = max(_pop_std(fd), sigma_floor) if fd else sigma_floor
    sp = max(_pop_std(pd), sigma_floor) if pd else sigma_floor

    raw = []
    for i, ns in enumerate(neigh):
        x, y = divmod(i, width)
        vals = []
        for u, v in ns:
            kf = -((_dist(feats[i], feats[u * width + v]) / (w1 * sf)) ** 2)
            kp = -((_dist((x, y), (u, v)) / (w2 * sp)) ** 2)
            vals.append(kf + w3 * kp)
        raw.append(math.fsum(vals) / len(vals) if vals else 0.0)
    return _softmax(raw)


def brute_force_assignment(remaining, text, centers):
    """Cluster label for each non-centre token, every a_ij recomputed from scratch."""
    rem = [list(map(float, r)) for r in remaining]
    txt = [list(map(float, t)) for t in text]
    d = len(rem[0])
    scale = math.sqrt(d)
    dot = lambda a, b: math.fsum(p * q for p, q in zip(a, b))  # noqa: E731
    cvecs = [rem[c] for c in centers]
    # per text token, distribution over centres
    t2c = [_softmax([dot(t, c) / scale for c in cvecs]) for t in txt]
    labels = []
    for i, v in enumerate(rem):
        if i in centers:
            continue
        v2t = _softmax([dot(v, t) / scale for t in txt])
        best, best_j = None, None
        for j in range(len(cvecs)):
            a = math.fsum(v2t[l] * t2c[l][j] for l in range(len(txt)))
            if best is None or a > best:
                best, best_j = a, j
        labels.append(best_j)
    return labels


def brute_force_topk(scores, k):
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(ranked[:k])


def brute_force_frame_cluster(frames, keep):
    """Returns ``(centres, assignment, merged frames)`` as nested lists."""
    nf = len(frames)

    def cos(a, b):
        na, nb = math.sqrt(math.fsum(x * x for x in a)), math.sqrt(math.fsum(x * x for x in b))
        return math.fsum(x * y for x, y in zip(a, b)) / max(na * nb, 1e-12)

    pooled = [[math.fsum(col) / len(fr) for col in zip(*fr)] for fr in frames]
    sim = [math.fsum(cos(pooled[i], pooled[j]) for j in range(nf) if j != i) / max(nf - 1, 1)
           for i in range(nf)]
    centres = sorted(sorted(range(nf), key=lambda i: (sim[i], i))[:keep])
    assign = []
    for i in range(nf):
        if i in centres:
            assign.append(centres.index(i))
            continue
        cs = [cos(pooled[i], pooled[c]) for c in centres]
        assign.append(max(range(keep), key=lambda j: (cs[j], -j)))
    if keep == nf:
        return centres, assign, [[list(t) for t in fr] for fr in frames]
    merged = []
    for j, c in enumerate(centres):
        buckets = [[list(t)] for t in frames[c]]
        for i in range(nf):
            if i == c or assign[i] != j:
                continue
            for tok in frames[i]:
                cs = [cos(tok, ct) for ct in frames[c]]
                best = max(range(len(cs)), key=lambda q: (cs[q], -q))
                buckets[best].append(list(tok))
        merged.append([[math.fsum(col) / len(b) for col in zip(*b)] for b in buckets])
    return centres, assign, merged


def exact_layer_flops(n, d, m, layers):
    return layers * (4 * n * d * d + 2 * n * n * d + 2 * n * d * m)


def exact_reduction_ratio(n, d, m, kept):
    """Exact rational F for keeping ``kept`` of ``n`` tokens (``gamma = kept / n``)."""
    g = Fraction(kept, n)
    num = 8 * g * n * d * d + 4 * (g * n) ** 2 * d + 6 * g * n * d * m
    den = 8 * n * d * d + 4 * n * n * d + 6 * n * d * m
    return 1 - num / den


@dataclass(frozen=True)
class FuzzCase:
    """A replayable random instance; every field derives from ``seed``."""

    seed: int
    height: int
    width: int
    dim: int
    text_len: int
    n_remaining: int
    n_centers: int

    @classmethod
    def from_seed(cls, seed, max_grid=8, max_dim=16, max_text=8, max_remaining=32,
                  max_centers=8):
        rng = Rng(seed)
        n_rem = rng.integers(1, max_remaining + 1)
        return cls(
            seed=seed,
            height=rng.integers(1, max_grid + 1),
            width=rng.integers(1, max_grid + 1),
            dim=rng.integers(1, max_dim + 1),
            text_len=rng.integers(1, max_text + 1),
            n_remaining=n_rem,
            n_centers=rng.integers(1, min(max_centers, n_rem) + 1),
        )

    def arrays(self):
        """Seeded grid features, remaining tokens and text features."""
        rng = Rng(self.seed ^ 0xA5A5A5A5)
        return {
            "features": rng.uniform((self.height * self.width, self.dim), -1.0, 1.0),
            "remaining": rng.uniform((self.n_remaining, self.dim), -2.0, 2.0),
            "text": rng.uniform((self.text_len, self.dim), -2.0, 2.0),
        }

    def repro(self):
        """Command that rebuilds this case, for fuzz failure messages."""
        return (f"seed={self.seed}; replay with: python -c \"from tokentrim.oracle import "
                f"FuzzCase; print(FuzzCase.from_seed({self.seed}).arrays())\"")
