from .config import ExperimentConfig, load_config
from .fitting import RateFit, fit_rate_slope, compare_decay_models

__all__ = [
    "ExperimentConfig",
    "load_config",
    "RateFit",
    "fit_rate_slope",
    "compare_decay_models",
]
