"""Adaptive multi-resolution attention in plain numpy, with a compiled
kernel core, reference baselines, gradient checks and scaling benchmarks."""

from ._backend import available_backends, backend_name, set_backend, use_backend
from .attention import (
    MultiHeadParams,
    QkvParams,
    kernel_attention,
    multi_head_attention,
    project_qkv,
    softmax_attention,
)
from .cost import CostEstimate, adamra_cost
from .layer import (
    AdamraConfig,
    AdamraParams,
    adamra_backward,
    adamra_forward,
    compress_memory,
    route,
)
from .numkernel import elu_plus_one, matmul, relu, segment_mean, softmax_rows

flop_and_memory_model = adamra_cost

__all__ = [
    "AdamraConfig",
    "AdamraParams",
    "CostEstimate",
    "MultiHeadParams",
    "QkvParams",
    "adamra_backward",
    "adamra_cost",
    "adamra_forward",
    "available_backends",
    "backend_name",
    "compress_memory",
    "elu_plus_one",
    "flop_and_memory_model",
    "kernel_attention",
    "matmul",
    "multi_head_attention",
    "project_qkv",
    "relu",
    "route",
    "segment_mean",
    "set_backend",
    "softmax_attention",
    "softmax_rows",
    "use_backend",
]
