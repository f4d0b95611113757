"""Multiple imputation of tabular data with denoising autoencoders trained on metamorphic truth."""

from mtimpute.dae import DaeNetwork, build_dae
from mtimpute.dataio import Dataset, denormalize, load_csv, load_dataset, normalize
from mtimpute.engine import (
    ImputationRun,
    dae_impute_mt,
    dae_impute_standard,
    initial_impute,
    mean_impute,
    multiple_impute,
)
from mtimpute.errors import (
    ConfigError,
    DatasetError,
    ImputationError,
    MissingnessError,
    NumericalError,
    StructuralError,
)
from mtimpute.experiment import emit_report, run_experiment, run_sensitivity_study
from mtimpute.metrics import covariance_drift, rmse_sum, summarize
from mtimpute.missingness import MissingnessMask, induce, read_mask, tune_probabilities, write_mask
from mtimpute.models import ExperimentConfig, ImputationConfig, MechanismSpec
from mtimpute.trace import TrainingTrace, traced

__all__ = [
    'ConfigError',
    'DaeNetwork',
    'Dataset',
    'DatasetError',
    'ExperimentConfig',
    'ImputationConfig',
    'ImputationError',
    'ImputationRun',
    'MechanismSpec',
    'MissingnessError',
    'MissingnessMask',
    'NumericalError',
    'StructuralError',
    'TrainingTrace',
    'build_dae',
    'covariance_drift',
    'dae_impute_mt',
    'dae_impute_standard',
    'denormalize',
    'emit_report',
    'induce',
    'initial_impute',
    'load_csv',
    'load_dataset',
    'mean_impute',
    'multiple_impute',
    'normalize',
    'read_mask',
    'rmse_sum',
    'run_experiment',
    'run_sensitivity_study',
    'summarize',
    'traced',
    'tune_probabilities',
    'write_mask',
]
