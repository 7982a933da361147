"""Analytical FLOPs and KV-cache models for a decoder-only language model."""

from dataclasses import asdict, dataclass

from ._validation import ValidationError


@dataclass(frozen=True)
class CostProfile:
    n: int
    d: int
    m: int
    layers: int
    kv_bytes_per_element: int = 2
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("n", "d", "m", "layers", "kv_bytes_per_element"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        _check_gamma(self.gamma)


def _check_gamma(gamma):
    if not 0 < gamma <= 1:
        raise ValidationError(f"retention fraction must lie in (0, 1], got {gamma}")


def layer_flops(profile, n=None):
    """``layers * (4nd^2 + 2n^2d + 2ndm)``; ``n`` may be fractional."""
    n = float(profile.n if n is None else n)
    d, m = float(profile.d), float(profile.m)
    return profile.layers * (4 * n * d * d + 2 * n * n * d + 2 * n * d * m)


def reduction_ratio(profile):
    """Theoretical fraction of per-layer FLOPs removed when keeping ``gamma * n`` tokens."""
    g = profile.gamma
    _check_gamma(g)
    n, d, m = float(profile.n), float(profile.d), float(profile.m)
    kept = 8 * g * n * d * d + 4 * (g * n) ** 2 * d + 6 * g * n * d * m
    full = 8 * n * d * d + 4 * n * n * d + 6 * n * d * m
    return 1.0 - kept / full


def kv_cache_bytes(profile, n=None):
    """Keys and values for every layer: ``2 * layers * n * d * bytes``."""
    n = profile.n if n is None else n
    return 2 * profile.layers * int(n) * profile.d * profile.kv_bytes_per_element


def to_megabytes(nbytes, binary=False):
    return nbytes / (2**20 if binary else 1e6)


def two_stage_flops(profile, n1, n2, l1, l2):
    """FLOPs with full ``n`` before layer ``l1``, ``n1`` until ``l2``, ``n2`` after."""
    if not 0 <= l1 <= l2 <= profile.layers:
        raise ValidationError(f"need 0 <= l1 <= l2 <= layers, got {l1}, {l2}")
    per = lambda n: layer_flops(CostProfile(profile.n, profile.d, profile.m, 1), n)  # noqa: E731
    return l1 * per(profile.n) + (l2 - l1) * per(n1) + (profile.layers - l2) * per(n2)


def cost_report(profile, binary=False):
    kept = profile.gamma * profile.n
    kv = kv_cache_bytes(profile, round(kept))
    return {
        "inputs": asdict(profile),
        "flops_baseline": layer_flops(profile),
        "flops_total": layer_flops(profile, kept),
        "reduction_ratio": reduction_ratio(profile),
        "kv_bytes": kv,
        "kv_bytes_baseline": kv_cache_bytes(profile),
        "kv_mb": to_megabytes(kv, binary),
        "kv_unit": "MiB" if binary else "MB",
    }
