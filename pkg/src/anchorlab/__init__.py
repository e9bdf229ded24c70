"""Continual-learning laboratory: replay baselines and hindsight anchor
learning on a small dense-network core, plus the benchmark harness and
numerical verification suite built around them."""

from .data import (DataError, Dataset, TaskData, TaskStream, build_task_stream,
                   load_idx_dataset, make_synthetic, write_idx_images,
                   write_idx_labels)
from .harness import (ConfigError, ExperimentConfig, GridSearchResult,
                      RunResult, Summary, aggregate, apply_overrides,
                      grid_search, load_base_dataset, load_config,
                      load_run_results, run_config, run_single, write_report,
                      write_run_result)
from .learners import (HyperParams, LearnerState, end_task, make_learner,
                       observe, start_task)
from .memory import RingMemory, memory_add, memory_sample
from .metrics import (AccuracyMatrix, average_accuracy, evaluate_task,
                      max_forgetting)
from .nn import Batch, Gradient, Network, init_network
from .verification import (gradient_check_suite, hvp, hvp_self_check,
                           order_check_suite, taylor_residual_sweep)

__version__ = "0.1.0"

__all__ = [
    "AccuracyMatrix", "Batch", "ConfigError", "DataError", "Dataset",
    "ExperimentConfig", "Gradient", "GridSearchResult", "HyperParams",
    "LearnerState", "Network", "RingMemory", "RunResult", "Summary",
    "TaskData", "TaskStream", "aggregate", "apply_overrides",
    "average_accuracy", "build_task_stream", "end_task", "evaluate_task",
    "grid_search", "gradient_check_suite", "hvp", "hvp_self_check",
    "init_network", "load_base_dataset", "load_config", "load_idx_dataset",
    "load_run_results", "make_learner", "make_synthetic", "max_forgetting",
    "memory_add", "memory_sample", "observe", "order_check_suite",
    "run_config", "run_single", "start_task", "taylor_residual_sweep",
    "write_idx_images", "write_idx_labels", "write_report",
    "write_run_result",
]
