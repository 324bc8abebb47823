"""Relation-aware global attention toolkit."""

from ._rga import (
    ConfigError,
    MissingIdentityError,
    ShapeError,
    cmc_map,
    config_keys,
    gen_dataset,
    id_loss,
    param_count,
    resolved_config,
    rga_channel,
    rga_spatial,
    run_cli,
    snl_context,
    triplet_batch_hard,
)

__all__ = [
    "ConfigError",
    "MissingIdentityError",
    "ShapeError",
    "cmc_map",
    "config_keys",
    "gen_dataset",
    "id_loss",
    "param_count",
    "resolved_config",
    "rga_channel",
    "rga_spatial",
    "run_cli",
    "snl_context",
    "triplet_batch_hard",
]
