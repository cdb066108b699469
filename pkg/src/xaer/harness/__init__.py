from xaer.harness.config import ConfigError, ExperimentConfig, load_config
from xaer.harness.runner import run_experiment, run_seed
from xaer.harness.scoring import RunCurve, ScoreReport, compare_matrix, score_curve, score_pooled

__all__ = [
    "ConfigError", "ExperimentConfig", "RunCurve", "ScoreReport", "compare_matrix", "load_config",
    "run_experiment", "run_seed", "score_curve", "score_pooled",
]
