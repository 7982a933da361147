"""Text-guided complement: cluster pruned tokens around text-relevant centres and merge."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, as_matrix, check_count
from .dvts import top_k
from .tensor_store import row_softmax

DOMINANT = "dominant"
COMPLEMENT = "complement"


@dataclass
class ClusterState:
    """Assignment of the non-centre remaining tokens to the centres.

    ``center_indices`` and ``member_indices`` index into the remaining-token
    set; ``labels[i]`` is the cluster of ``member_indices[i]`` and
    ``assignment_scores[i, j]`` its text-mediated affinity to centre ``j``.
    """

    center_indices: np.ndarray
    member_indices: np.ndarray
    labels: np.ndarray
    assignment_scores: np.ndarray
    center_vectors: np.ndarray = field(repr=False)

    def weights(self):
        """Per-member merge weights, normalised within each cluster."""
        w = np.zeros(len(self.member_indices))
        for j in range(len(self.center_indices)):
            members = np.nonzero(self.labels == j)[0]
            if len(members):
                a = self.assignment_scores[members, j]
                w[members] = a / a.sum()
        return w


@dataclass
class ComplementResult:
    final_tokens: np.ndarray
    complement_tokens: np.ndarray
    provenance: list


def _check_text(text, d):
    t = as_matrix(text, "text features")
    if len(t) == 0 or t.shape[1] != d:
        raise ValidationError(f"text features {t.shape} incompatible with feature dim {d}")
    return t


def text_relevance(text, remaining):
    """Mean over text tokens of the text-to-visual attention rows.

    Returns ``(s, S_t2v)`` with ``S_t2v`` of shape ``(L, M)``.
    """
    v = as_matrix(remaining, "remaining tokens")
    if len(v) == 0:
        raise ValidationError("text_relevance: empty remaining set")
    t = _check_text(text, v.shape[1])
    s_t2v = row_softmax(t @ v.T / np.sqrt(v.shape[1]))
    return s_t2v.sum(axis=0) / len(t), s_t2v


def pick_centers(s, r):
    check_count(r, 1, len(s), "R")
    return top_k(s, r)


def _assign(members, text, center_vectors):
    d = members.shape[1]
    scale = np.sqrt(d)
    s_t2c = row_softmax(text @ center_vectors.T / scale)  # (L, R), softmax across centres
    if len(members) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, len(center_vectors)))
    s_v2t = row_softmax(members @ text.T / scale)  # (M, L)
    a = s_v2t @ s_t2c
    return np.argmax(a, axis=1), a


def assign_tokens(remaining, text, centers):
    """Assign every non-centre remaining token to its best text-mediated centre."""
    v = as_matrix(remaining, "remaining tokens")
    t = _check_text(text, v.shape[1])
    centers = np.asarray(centers, dtype=np.int64)
    if len(centers) == 0:
        raise ValidationError("assign_tokens: need at least one centre")
    if len(np.unique(centers)) != len(centers):
        raise ValidationError(f"duplicate centres: {centers.tolist()}")
    if centers.min() < 0 or centers.max() >= len(v):
        raise ValidationError("centre index out of range")
    members = np.setdiff1d(np.arange(len(v)), centers)
    labels, a = _assign(v[members], t, v[centers])
    return ClusterState(centers, members, labels, a, v[centers].copy())


def _merge(state, remaining):
    v = np.asarray(remaining, dtype=np.float64)
    w = state.weights()
    out = state.center_vectors.copy()
    for j in range(len(out)):
        members = np.nonzero(state.labels == j)[0]
        for m in members:
            out[j] += w[m] * v[state.member_indices[m]]
    return out


def aggregate_clusters(state, remaining, text=None, iterations=1):
    """Merge each cluster into ``centre + weighted mean of members``.

    With ``iterations > 1`` the merged vectors become the new centres, the
    member pool is reassigned against them (needs ``text``) and merged again.
    Returns ``(complement_tokens, final_state)``.
    """
    check_count(iterations, 1, 10**6, "iterations")
    v = as_matrix(remaining, "remaining tokens")
    merged = _merge(state, v)
    for _ in range(iterations - 1):
        if text is None:
            raise ValidationError("iterations > 1 requires text features")
        t = _check_text(text, v.shape[1])
        labels, a = _assign(v[state.member_indices], t, merged)
        state = ClusterState(state.center_indices, state.member_indices, labels, a, merged)
        merged = _merge(state, v)
    return merged, state


def compose_final(dominant, complement):
    dom = as_matrix(dominant, "dominant tokens")
    com = np.asarray(complement, dtype=np.float64)
    if com.size == 0:
        com = com.reshape(0, dom.shape[1])
    com = as_matrix(com, "complement tokens")
    if com.shape[1] != dom.shape[1]:
        raise ValidationError(f"feature dims differ: {dom.shape[1]} vs {com.shape[1]}")
    provenance = [DOMINANT] * len(dom) + [COMPLEMENT] * len(com)
    return ComplementResult(np.vstack([dom, com]), com, provenance)
