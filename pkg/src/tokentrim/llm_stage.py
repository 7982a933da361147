"""Second pruning point inside the language model.

The first generated token's attention over visual hidden states replaces
[CLS] attention; visual-text cross attention picks complement centres.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, as_matrix, check_count
from .dvts import LtamParams, adaptive_fuse, ltam_scores_at, select_dominant
from .tensor_store import row_softmax, softmax
from .tgvc import aggregate_clusters, assign_tokens, compose_final, pick_centers

TEXT_AXIS = "text"
VISUAL_AXIS = "visual"


@dataclass
class DecoderHiddenStates:
    h_gen: np.ndarray
    h_v: np.ndarray
    h_t: np.ndarray

    def __post_init__(self):
        self.h_gen = as_matrix(np.reshape(self.h_gen, -1), "h_gen", ndim=1)
        self.h_v = as_matrix(self.h_v, "h_v")
        self.h_t = as_matrix(self.h_t, "h_t")
        d = len(self.h_gen)
        if self.h_v.shape[1] != d or self.h_t.shape[1] != d:
            raise ValidationError(
                f"hidden sizes differ: h_gen {d}, h_v {self.h_v.shape}, h_t {self.h_t.shape}"
            )
        if len(self.h_v) == 0 or len(self.h_t) == 0:
            raise ValidationError("need at least one visual and one text state")

    @property
    def hidden_size(self):
        return len(self.h_gen)


def gen_token_scores(states):
    return softmax(states.h_v @ states.h_gen / np.sqrt(states.hidden_size))


def cross_modal_scores(states, axis=TEXT_AXIS):
    """Mean visual-to-text attention per visual token.

    ``axis="text"`` normalises each visual row over the text tokens, which
    makes every entry exactly ``1 / N_t``. ``axis="visual"`` normalises each
    text column over the visual tokens instead.
    """
    logits = states.h_v @ states.h_t.T / np.sqrt(states.hidden_size)
    n_t = logits.shape[1]
    if axis == TEXT_AXIS:
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        z = e.sum(axis=1)
        # sum before dividing so a row-stochastic row averages to 1/N_t exactly
        return (e.sum(axis=1) / z) / n_t
    if axis == VISUAL_AXIS:
        return row_softmax(logits.T).T.sum(axis=1) / n_t
    raise ValidationError(f"unknown cross_modal_axis {axis!r}")


def _is_flat(v):
    return len(v) == 0 or v.max() == v.min()


@dataclass
class Stage2Result:
    dominant_indices: np.ndarray
    center_indices: np.ndarray
    member_indices: np.ndarray
    labels: np.ndarray
    merge_weights: np.ndarray
    complement: object
    scores: np.ndarray
    alpha: float
    center_scores: np.ndarray


def stage2_prune(states, budget, coords=None, ltam_params=LtamParams(), features=None,
                 cross_modal_axis=TEXT_AXIS, swap_alpha=False, iterations=1,
                 center_fallback=True):
    """Select ``K`` dominant visual states and merge the rest into ``R`` complements.

    ``coords`` holds the original grid position of each visual token; when
    given, local affinity over those positions is fused with the generated
    token scores. ``features`` defaults to ``states.h_v``.
    """
    k, r = budget
    n_v = len(states.h_v)
    check_count(k, 1, n_v, "K")
    check_count(r, 0, n_v - k, "R")

    global_s = gen_token_scores(states)
    alpha = 1.0
    if coords is not None:
        feats = states.h_v if features is None else features
        local_s = ltam_scores_at(feats, coords, ltam_params)
        scores, alpha = adaptive_fuse(global_s, local_s, swap=swap_alpha)
    else:
        scores = global_s
    dominant = select_dominant(scores, k)
    rest = np.setdiff1d(np.arange(n_v), dominant)

    center_s = np.zeros(0)
    empty = np.zeros(0, dtype=np.int64)
    if r == 0:
        res = compose_final(states.h_v[dominant], np.zeros((0, states.hidden_size)))
        return Stage2Result(dominant, empty, empty, empty, np.zeros(0), res, scores, alpha,
                            center_s)

    candidates = [cross_modal_scores(states, cross_modal_axis)]
    if center_fallback:
        candidates += [cross_modal_scores(states, VISUAL_AXIS), global_s]
    for cand in candidates:
        center_s = cand[rest] / cand[rest].sum()
        if not _is_flat(center_s):
            break
    centers = pick_centers(center_s, r)
    state = assign_tokens(states.h_v[rest], states.h_t, centers)
    merged, state = aggregate_clusters(state, states.h_v[rest], states.h_t, iterations)
    res = compose_final(states.h_v[dominant], merged)
    return Stage2Result(dominant, rest[state.center_indices], rest[state.member_indices],
                        state.labels, state.weights(), res, scores, alpha, center_s)
