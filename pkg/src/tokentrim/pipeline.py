"""Budget planning, two-stage orchestration and inter-frame video compression."""

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._validation import ValidationError, as_matrix, check_count
from .dvts import (LtamParams, adaptive_fuse, global_scores, grid_coords, ltam_scores,
                   select_dominant)
from .llm_stage import TEXT_AXIS, stage2_prune
from .tgvc import (aggregate_clusters, assign_tokens, compose_final, pick_centers,
                   text_relevance)


def plan_budget(total, retain, ratio=(3, 1)):
    """Split ``retain`` tokens into ``(K, R)`` in proportion ``a:b``.

    ``K = round(retain * a / (a + b))`` with halves rounded up, never below 1.
    """
    check_count(total, 1, math.inf, "total")
    check_count(retain, 1, total, "retain")
    a, b = ratio
    if not (a > 0 and b >= 0):
        raise ValidationError(f"ratio must be positive, got {ratio}")
    k = math.floor(Fraction(retain) * Fraction(a) / (Fraction(a) + Fraction(b)) + Fraction(1, 2))
    k = max(k, 1)
    return k, retain - k


@dataclass
class BudgetPlan:
    """Every knob of a pruning run.

    ``retain`` is the vision-stage budget. The LLM stage keeps
    ``stage2_rate * N_v`` tokens when that is set, otherwise it scales
    ``final_retain`` by the stage-1 survivor count.
    """

    total: int
    retain: int
    ratio: tuple = (3, 1)
    ltam: LtamParams = field(default_factory=LtamParams)
    iterations: int = 1
    tgvc: bool = True
    swap_alpha: bool = False
    cross_modal_axis: str = TEXT_AXIS
    final_retain: int = None
    stage2_rate: float = None
    stage2_ltam: bool = True
    vision_layer: int = 23
    llm_layer: int = 2

    def __post_init__(self):
        self.ratio = tuple(self.ratio)
        self.k, self.r = self.split(self.total, self.retain)

    def split(self, total, retain):
        if not self.tgvc:
            check_count(retain, 1, total, "retain")
            return retain, 0
        return plan_budget(total, retain, self.ratio)

    @classmethod
    def from_rate(cls, total, rate=0.5, **kw):
        return cls(total=total, retain=max(1, round(total * rate)), **kw)


@dataclass
class SelectionResult:
    """Output of one pruning point.

    Index arrays refer to the token positions of that stage's input;
    ``source_indices`` maps every final token to its original input token
    (the centre, for complement tokens) and ``coords`` to its grid position.
    """

    final_tokens: np.ndarray
    provenance: list
    dominant_indices: np.ndarray
    center_indices: np.ndarray
    member_indices: np.ndarray
    labels: np.ndarray
    merge_weights: np.ndarray
    source_indices: np.ndarray
    coords: np.ndarray
    scores: dict
    alpha: float
    k: int
    r: int
    warnings: list = field(default_factory=list)

    @property
    def n_final(self):
        return len(self.final_tokens)


def run_vision_stage(features, cls_attention, grid, text, plan):
    f = as_matrix(features, "features")
    n = len(f)
    if plan.total != n:
        raise ValidationError(f"plan built for {plan.total} tokens, got {n}")
    attn = as_matrix(cls_attention, "cls_attention")
    if attn.shape[1] != n:
        raise ValidationError(f"cls_attention covers {attn.shape[1]} tokens, features {n}")
    k, r = plan.k, plan.r

    g = global_scores(attn)
    loc = ltam_scores(f, grid, plan.ltam)
    fused, alpha = adaptive_fuse(g, loc, swap=plan.swap_alpha)
    dominant = select_dominant(fused, k)
    rest = np.setdiff1d(np.arange(n), dominant)
    scores = {"global": g, "local": loc, "fused": fused}
    empty = np.zeros(0, dtype=np.int64)

    if r > 0:
        if text is None:
            raise ValidationError("text features are required when the complement budget R > 0")
        s, _ = text_relevance(text, f[rest])
        state = assign_tokens(f[rest], text, pick_centers(s, r))
        merged, state = aggregate_clusters(state, f[rest], text, plan.iterations)
        centers = rest[state.center_indices]
        members = rest[state.member_indices]
        labels, weights = state.labels, state.weights()
        scores["text_relevance"] = s
    else:
        merged = np.zeros((0, f.shape[1]))
        centers = members = labels = empty
        weights = np.zeros(0)

    res = compose_final(f[dominant], merged)
    source = np.concatenate([dominant, centers]).astype(np.int64)
    coords = grid_coords(*grid)[source]
    return SelectionResult(res.final_tokens, res.provenance, dominant, centers, members,
                           labels, weights, source, coords, scores, alpha, k, r)


def stage2_retain(n_v, plan, stage1_retain=None):
    """Token count kept at the LLM stage, clamped to ``[1, n_v]``.

    Returns ``(count, warning or None)``.
    """
    stage1_retain = n_v if stage1_retain is None else stage1_retain
    if plan.stage2_rate is not None:
        want = round(plan.stage2_rate * n_v)
    elif plan.final_retain is not None:
        want = round(plan.final_retain / stage1_retain * n_v)
    else:
        want = n_v
    count = min(max(want, 1), n_v)
    msg = None
    if count != want:
        msg = f"stage-2 retain {want} clamped to {count} (N_v={n_v})"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return count, msg


def run_llm_stage(selection, states, plan):
    n_v = len(states.h_v)
    if n_v != selection.n_final:
        raise ValidationError(
            f"stage-1 kept {selection.n_final} tokens but {n_v} visual hidden states were given"
        )
    keep, msg = stage2_retain(n_v, plan, selection.n_final)
    k, r = plan.split(n_v, keep)
    coords = selection.coords if plan.stage2_ltam else None
    out = stage2_prune(states, (k, r), coords=coords, ltam_params=plan.ltam,
                       cross_modal_axis=plan.cross_modal_axis, swap_alpha=plan.swap_alpha,
                       iterations=plan.iterations)
    picked = np.concatenate([out.dominant_indices, out.center_indices]).astype(np.int64)
    scores = {"fused": out.scores, "center": out.center_scores}
    return SelectionResult(out.complement.final_tokens, out.complement.provenance,
                           out.dominant_indices, out.center_indices, out.member_indices,
                           out.labels, out.merge_weights, selection.source_indices[picked],
                           selection.coords[picked], scores, out.alpha, k, r,
                           [msg] if msg else [])


def _cosine_matrix(a, b, eps=1e-12):
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    return (a @ b.T) / np.maximum(np.outer(na, nb), eps)


@dataclass
class FrameClusters:
    frames: np.ndarray
    center_frames: np.ndarray
    assignment: np.ndarray
    similarity: np.ndarray


def frame_cluster(frames, keep_frames):
    """Merge redundant frames into the ``keep_frames`` most distinctive ones.

    A frame's distinctiveness is its mean pooled-feature cosine similarity
    to every other frame; the least similar frames become centres. Each
    other frame joins its most similar centre, and each of its tokens is
    averaged (uniform weights) into the nearest token of the centre frame.
    Output frames keep temporal order.
    """
    x = as_matrix(frames, "frames", ndim=3)
    n_frames = len(x)
    keep = check_count(keep_frames, 1, n_frames, "keep_frames")
    pooled = x.mean(axis=1)
    cos = _cosine_matrix(pooled, pooled)
    if n_frames > 1:
        sim = (cos.sum(axis=1) - np.diag(cos)) / (n_frames - 1)
    else:
        sim = np.zeros(1)
    centers = np.sort(np.argsort(sim, kind="stable")[:keep])
    assignment = np.argmax(cos[:, centers], axis=1)
    assignment[centers] = np.arange(keep)
    if keep == n_frames:
        return FrameClusters(x.copy(), centers, assignment, sim)

    out = np.empty((keep, x.shape[1], x.shape[2]))
    for j, c in enumerate(centers):
        total = x[c].copy()
        count = np.ones(x.shape[1])
        for fi in range(n_frames):
            if fi == c or assignment[fi] != j:
                continue
            nearest = np.argmax(_cosine_matrix(x[fi], x[c]), axis=1)
            np.add.at(total, nearest, x[fi])
            np.add.at(count, nearest, 1.0)
        out[j] = total / count[:, None]
    return FrameClusters(out, centers, assignment, sim)


@dataclass
class VideoPlan:
    """Video budget: ``total_retain`` tokens over ``keep_frames`` frames.

    Defaults: 8 frames of 256 tokens down to 17 tokens per frame, 136 total.
    """

    total_retain: int = 136
    keep_frames: int = 8
    ratio: tuple = (3, 1)
    ltam: LtamParams = field(default_factory=LtamParams)
    iterations: int = 1

    def per_frame(self):
        base, extra = divmod(self.total_retain, self.keep_frames)
        return [base + (1 if i < extra else 0) for i in range(self.keep_frames)]


def run_video(frames, cls_attention, grid, text, plan=VideoPlan()):
    """Inter-frame clustering followed by per-frame two-module pruning.

    ``cls_attention`` is ``(F, H, N)``; a merged frame keeps its centre
    frame's attention rows. Returns ``(per-frame SelectionResults, FrameClusters)``.
    """
    x = as_matrix(frames, "frames", ndim=3)
    attn = as_matrix(cls_attention, "cls_attention", ndim=3)
    if attn.shape[0] != len(x) or attn.shape[2] != x.shape[1]:
        raise ValidationError(f"cls_attention {attn.shape} does not match frames {x.shape}")
    clusters = frame_cluster(x, plan.keep_frames)
    results = []
    for j, budget in enumerate(plan.per_frame()):
        fp = BudgetPlan(total=x.shape[1], retain=budget, ratio=plan.ratio, ltam=plan.ltam,
                        iterations=plan.iterations)
        results.append(run_vision_stage(clusters.frames[j], attn[clusters.center_frames[j]],
                                        grid, text, fp))
    return results, clusters

