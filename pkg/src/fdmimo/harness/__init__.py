from .config import ExperimentConfig, TrainingConfig, load_config
from .io import emit_results, export_dataset, import_dataset, load_model, read_results_csv, save_model
from .metrics import flops, nmse
from .sweep import CovarianceCache, ResultRecord, run_sweep

__all__ = [
    "ExperimentConfig",
    "TrainingConfig",
    "load_config",
    "emit_results",
    "export_dataset",
    "import_dataset",
    "load_model",
    "save_model",
    "read_results_csv",
    "flops",
    "nmse",
    "CovarianceCache",
    "ResultRecord",
    "run_sweep",
]
