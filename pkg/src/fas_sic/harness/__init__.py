from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .experiment import run_experiment
from .report import CellError, CellResult, RsiReport, Summary, empirical_cdf, summarize

__all__ = [
    "CellError", "CellResult", "ConfigError", "ExperimentConfig", "RsiReport", "Summary",
    "config_from_dict", "empirical_cdf", "load_config", "run_experiment", "summarize",
]
