"""Semi-supervised training with sinusoidal threshold decay."""

from ._core import (
    ConfigError,
    ContractError,
    DiffusionSchedule,
    IoError,
    cli,
    default_config,
    envelope,
    hand_classify,
    invert_with_oracle,
    load_tnsr,
    make_bundle,
    pseudo_label,
    q_sample,
    render_sample,
    save_tnsr,
    threshold_at,
    threshold_curve,
    train_ssl,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DiffusionSchedule",
    "IoError",
    "cli",
    "default_config",
    "envelope",
    "hand_classify",
    "invert_with_oracle",
    "load_tnsr",
    "make_bundle",
    "pseudo_label",
    "q_sample",
    "render_sample",
    "save_tnsr",
    "threshold_at",
    "threshold_curve",
    "train_ssl",
]
