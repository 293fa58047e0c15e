"""Masked self-attention pseudolikelihood density estimation."""

from .model import (
    SIGMA_FLOOR,
    DensityModel,
    MixtureParams,
    ModelConfig,
    forward_conditionals,
    init_params,
    mixture_logpdf,
    pl_loss,
    pl_loss_and_grads,
    positional_encoding,
    positional_table,
    sample_mixture,
)
from .training import fit, load_density, save_density, validation_pseudolikelihood

__all__ = [
    "SIGMA_FLOOR",
    "DensityModel",
    "MixtureParams",
    "ModelConfig",
    "forward_conditionals",
    "init_params",
    "mixture_logpdf",
    "pl_loss",
    "pl_loss_and_grads",
    "positional_encoding",
    "positional_table",
    "sample_mixture",
    "fit",
    "load_density",
    "save_density",
    "validation_pseudolikelihood",
]
