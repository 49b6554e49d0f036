"""Toy perceptual-weights model: FLOPs cost model, self-checks and a small
model handle for inspecting logits and generated deltas."""

from vlora._core import (
    Model,
    check,
    flops_baseline,
    flops_vlora_infer,
    flops_vlora_train,
    kind_set,
    kind_set_labels,
    reference_table,
    to_gflops,
)

__all__ = [
    "Model",
    "check",
    "flops_baseline",
    "flops_vlora_infer",
    "flops_vlora_train",
    "kind_set",
    "kind_set_labels",
    "reference_table",
    "to_gflops",
]
