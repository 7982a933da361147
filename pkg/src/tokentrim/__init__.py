"""Training-free visual token pruning for multimodal transformers.

Dominant tokens are chosen from fused global attention and local affinity
scores; the remaining tokens are clustered around text-relevant centres and
merged into a few complement tokens.
"""

from ._validation import ValidationError
from .dvts import (LtamParams, adaptive_fuse, cls_attention_from_qk, global_scores,
                   ltam_scores, select_dominant)
from .efficiency import CostProfile, kv_cache_bytes, layer_flops, reduction_ratio
from .estimators import DecoderTokenPruner, FrameClusterer, VisionTokenPruner
from .llm_stage import DecoderHiddenStates, cross_modal_scores, gen_token_scores, stage2_prune
from .pipeline import (BudgetPlan, SelectionResult, VideoPlan, frame_cluster, plan_budget,
                       run_llm_stage, run_video, run_vision_stage)
from .tensor_store import (Rng, TensorFormatError, load_tensor, mean_and_variance, row_softmax,
                           save_tensor)
from .tgvc import aggregate_clusters, assign_tokens, compose_final, pick_centers, text_relevance

__version__ = "0.1.0"
