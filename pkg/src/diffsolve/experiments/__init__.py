"""Experiment layer: configs, data, runs, records, savings, plots, CLI."""

from .config import ScenarioConfig, load_config, mode_kind, save_config, scenario_defaults
from .data import (
    Dataset,
    ValView,
    build_dataset,
    downsample_staggered,
    generate_fourier_ic,
    generate_ns_ic,
    load_dataset,
    project_divergence_free,
    save_dataset,
)
from .records import (
    RunRecord,
    read_metrics_csv,
    read_summary_json,
    save_record,
    write_decision_csv,
    write_metrics_csv,
    write_summary_json,
)
from .runners import (
    measure_convergence_budget,
    run_emulator_training,
    run_neural_hybrid,
    run_poisson_inverse,
    run_scenario,
    scenario_grid,
)
from .savings import compute_savings

__all__ = [
    "Dataset",
    "RunRecord",
    "ScenarioConfig",
    "ValView",
    "build_dataset",
    "compute_savings",
    "downsample_staggered",
    "generate_fourier_ic",
    "generate_ns_ic",
    "load_config",
    "load_dataset",
    "measure_convergence_budget",
    "mode_kind",
    "read_metrics_csv",
    "read_summary_json",
    "run_emulator_training",
    "run_neural_hybrid",
    "run_poisson_inverse",
    "run_scenario",
    "save_config",
    "save_dataset",
    "save_record",
    "scenario_defaults",
    "scenario_grid",
    "write_decision_csv",
    "write_metrics_csv",
    "write_summary_json",
]
