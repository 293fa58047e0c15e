"""Distill stacked tabular ensembles into fast single models via
pseudolikelihood density estimation, Gibbs-sampled data augmentation, and
teacher-labeled student training."""

from . import datasets, diagnostics, gibbs, learners, strategies, tables
from .bench import DatasetSpec, ExperimentConfig, RunReport, emit_report, load_report, measure_latency, run_experiment
from .density import DensityModel, MixtureParams, ModelConfig, fit, load_density, save_density
from .gibbs import AugmentedSet, ChainState, GibbsConfig, diffusion_of, generate
from .strategies import DistillSet, MungeParams
from .tables import Schema, SplitSpec, Table, TaskKind, load_csv, split_train_val

__version__ = "0.1.0"
