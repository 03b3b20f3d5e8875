"""Conditionally invertible recurrent flow: sequence training, conditional
generation, and exact per-timestep densities."""

from ._crow import (
    Dataset,
    DatasetMeta,
    EpochMetrics,
    FlowConfig,
    FlowModel,
    density,
    forward_step,
    generate,
    group_analysis,
    init_model,
    inverse_step,
    mmd2,
    synth_moving_blob,
    synth_regime,
    train,
    verify,
)

__all__ = [
    "Dataset",
    "DatasetMeta",
    "EpochMetrics",
    "FlowConfig",
    "FlowModel",
    "density",
    "forward_step",
    "generate",
    "group_analysis",
    "init_model",
    "inverse_step",
    "mmd2",
    "synth_moving_blob",
    "synth_regime",
    "train",
    "verify",
]
