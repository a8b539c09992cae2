"""Token fusion module: numpy forward/backward passes with gradient checks."""

from .arraydoc import (
    load_arrays,
    load_pfm_fixture,
    save_arrays,
    save_pfm_fixture,
)
from .checks import CHECKS, run_all, run_check
from .gradcheck import GradReport, grad_check, sum_squares_loss
from .ops import (
    AttentionParams,
    FfnParams,
    LnParams,
    attention_params,
    ffn,
    ffn_params,
    layer_norm,
    ln_params,
    multi_head_cross_attention,
    softmax_rows,
)
from .pfm import (
    PATCH,
    VARIANTS,
    BlockParams,
    PatchParams,
    PfmParams,
    StemParams,
    embed_tokens,
    flatten_params,
    init_pfm_params,
    multimodal_fusion,
    pfm_backward,
    pfm_forward,
    positional_encoding,
    render_heatmap,
    temporal_fusion,
    unflatten_params,
)

__all__ = [
    "AttentionParams", "BlockParams", "CHECKS", "FfnParams", "GradReport",
    "LnParams", "PATCH", "PatchParams", "PfmParams", "StemParams", "VARIANTS",
    "attention_params", "embed_tokens", "ffn", "ffn_params", "flatten_params",
    "grad_check", "init_pfm_params", "layer_norm", "ln_params", "load_arrays",
    "load_pfm_fixture", "multi_head_cross_attention", "multimodal_fusion",
    "pfm_backward", "pfm_forward", "positional_encoding", "render_heatmap",
    "run_all", "run_check", "save_arrays", "save_pfm_fixture", "softmax_rows",
    "sum_squares_loss", "temporal_fusion", "unflatten_params",
]
