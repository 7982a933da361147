"""scikit-learn style wrappers.

``fit`` computes a selection for one token matrix; ``transform`` replays
that selection (kept rows plus cluster merges) on any matrix with the same
token count, e.g. hidden states from a later layer. The replay matches
the fitted output exactly only for a single clustering iteration.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import ValidationError
from .dvts import LtamParams
from .llm_stage import TEXT_AXIS, DecoderHiddenStates, stage2_prune
from .pipeline import BudgetPlan, frame_cluster, run_vision_stage


def _replay(X, dominant, centers, members, labels, weights, r):
    out = [X[dominant]]
    comp = X[centers].copy()
    for m, lab, w in zip(members, labels, weights):
        comp[lab] += w * X[m]
    if r:
        out.append(comp)
    return np.vstack(out)


class _SelectionReplayMixin(TransformerMixin):
    def transform(self, X):
        check_is_fitted(self, "dominant_indices_")
        X = check_array(X, dtype=np.float64)
        if X.shape[0] != self.n_tokens_in_:
            raise ValidationError(f"fitted on {self.n_tokens_in_} tokens, got {X.shape[0]}")
        return _replay(X, self.dominant_indices_, self.center_indices_, self.member_indices_,
                       self.labels_, self.merge_weights_, len(self.center_indices_))

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).final_tokens_


class VisionTokenPruner(_SelectionReplayMixin, BaseEstimator):
    """Vision-stage pruning of an ``(N, d)`` token matrix to ``retain`` tokens.

    Parameters mirror the run config; ``fit`` additionally needs the
    per-head [CLS] attention ``(H, N)``, the text features ``(L, d)`` and
    the token grid.

    Examples
    --------
    >>> pruner = VisionTokenPruner(retain=64)
    >>> kept = pruner.fit_transform(X, cls_attention=A, text=T, grid=(24, 24))
    """

    def __init__(self, retain=64, ratio=(3, 1), kernel_size=3, w1=0.3, w2=0.3, w3=0.5,
                 sigma_floor=1e-6, iterations=1, tgvc=True, swap_alpha=False):
        self.retain = retain
        self.ratio = ratio
        self.kernel_size = kernel_size
        self.w1 = w1
        self.w2 = w2
        self.w3 = w3
        self.sigma_floor = sigma_floor
        self.iterations = iterations
        self.tgvc = tgvc
        self.swap_alpha = swap_alpha

    def _plan(self, n):
        ltam = LtamParams(self.kernel_size, self.w1, self.w2, self.w3, self.sigma_floor)
        return BudgetPlan(total=n, retain=self.retain, ratio=self.ratio, ltam=ltam,
                          iterations=self.iterations, tgvc=self.tgvc,
                          swap_alpha=self.swap_alpha)

    def fit(self, X, y=None, *, cls_attention, text=None, grid=None):
        X = check_array(X, dtype=np.float64)
        n = X.shape[0]
        if grid is None:
            side = int(round(np.sqrt(n)))
            if side * side != n:
                raise ValidationError(f"{n} tokens is not a square grid; pass grid=(H, W)")
            grid = (side, side)
        sel = run_vision_stage(X, cls_attention, tuple(grid), text, self._plan(n))
        self.selection_ = sel
        self.n_tokens_in_ = n
        self.n_features_in_ = X.shape[1]
        self.grid_ = tuple(grid)
        self.k_, self.r_ = sel.k, sel.r
        self.alpha_ = sel.alpha
        self.scores_ = sel.scores["fused"]
        self.dominant_indices_ = sel.dominant_indices
        self.center_indices_ = sel.center_indices
        self.member_indices_ = sel.member_indices
        self.labels_ = sel.labels
        self.merge_weights_ = sel.merge_weights
        self.final_tokens_ = sel.final_tokens
        return self

    def get_support(self):
        """Boolean mask of tokens kept verbatim (dominant) or used as centres."""
        check_is_fitted(self, "dominant_indices_")
        mask = np.zeros(self.n_tokens_in_, dtype=bool)
        mask[self.dominant_indices_] = True
        mask[self.center_indices_] = True
        return mask


class DecoderTokenPruner(_SelectionReplayMixin, BaseEstimator):
    """LLM-stage pruning of visual hidden states ``X = H_v`` to ``K + R`` rows.

    ``fit`` needs the first generated token's state ``h_gen`` and the text
    states ``h_t``; ``coords`` turns on local affinity over the original grid.
    """

    def __init__(self, k=48, r=16, kernel_size=3, w1=0.3, w2=0.3, w3=0.5,
                 cross_modal_axis=TEXT_AXIS, swap_alpha=False, iterations=1):
        self.k = k
        self.r = r
        self.kernel_size = kernel_size
        self.w1 = w1
        self.w2 = w2
        self.w3 = w3
        self.cross_modal_axis = cross_modal_axis
        self.swap_alpha = swap_alpha
        self.iterations = iterations

    def fit(self, X, y=None, *, h_gen, h_t, coords=None):
        X = check_array(X, dtype=np.float64)
        states = DecoderHiddenStates(h_gen, X, h_t)
        ltam = LtamParams(self.kernel_size, self.w1, self.w2, self.w3)
        out = stage2_prune(states, (self.k, self.r), coords=coords, ltam_params=ltam,
                           cross_modal_axis=self.cross_modal_axis, swap_alpha=self.swap_alpha,
                           iterations=self.iterations)
        self.n_tokens_in_ = X.shape[0]
        self.n_features_in_ = X.shape[1]
        self.alpha_ = out.alpha
        self.scores_ = out.scores
        self.dominant_indices_ = out.dominant_indices
        self.center_indices_ = out.center_indices
        self.member_indices_ = out.member_indices
        self.labels_ = out.labels
        self.merge_weights_ = out.merge_weights
        self.final_tokens_ = out.complement.final_tokens
        return self


class FrameClusterer(TransformerMixin, BaseEstimator):
    """Collapse an ``(F, N, d)`` stack of frames to ``keep_frames`` frames."""

    def __init__(self, keep_frames=8):
        self.keep_frames = keep_frames

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, allow_nd=True)
        if X.ndim != 3:
            raise ValidationError(f"expected (F, N, d) frames, got shape {X.shape}")
        res = frame_cluster(X, self.keep_frames)
        self.center_frames_ = res.center_frames
        self.assignment_ = res.assignment
        self.similarity_ = res.similarity
        self.frames_ = res.frames
        return self

    def transform(self, X):
        check_is_fitted(self, "frames_")
        return frame_cluster(X, self.keep_frames).frames

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).frames_
