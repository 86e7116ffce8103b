"""Python access to the sharekd C++ core."""

from ._sharekd import (
    ConfigError,
    StageError,
    assign_ptp_label,
    count_parameters,
    kd_loss,
    normalize_config,
    report,
    run_pipeline,
    sharing_plan,
    softmax,
    temperature_softmax,
)

__all__ = [
    "ConfigError",
    "StageError",
    "assign_ptp_label",
    "count_parameters",
    "kd_loss",
    "normalize_config",
    "report",
    "run_pipeline",
    "sharing_plan",
    "softmax",
    "temperature_softmax",
]
