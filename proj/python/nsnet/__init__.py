"""Python bindings for the nested subspace network core."""

from ._core import (
    break_even_rank,
    containment_score,
    effective_weight,
    flops_dense,
    flops_factored,
    nsn_forward,
    svd,
    svd_init,
)

__all__ = [
    "break_even_rank",
    "containment_score",
    "effective_weight",
    "flops_dense",
    "flops_factored",
    "nsn_forward",
    "svd",
    "svd_init",
]
