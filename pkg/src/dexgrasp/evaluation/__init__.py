from .batch import TaskMetrics, batch_evaluate, evaluate_grasp, write_tables
from .metrics import (
    CONTACT_EPS,
    METRIC_COLUMNS,
    MetricReport,
    part_accuracy,
    penetration_depth,
    penetration_metrics,
    semantic_contact_ratio,
)
from .simulation import SimConfig, SimResult, mass_properties, simulate_displacement, simulation_success

__all__ = [
    "CONTACT_EPS", "METRIC_COLUMNS", "MetricReport", "SimConfig", "SimResult", "TaskMetrics",
    "batch_evaluate", "evaluate_grasp", "mass_properties", "part_accuracy", "penetration_depth",
    "penetration_metrics", "semantic_contact_ratio", "simulate_displacement", "simulation_success",
    "write_tables",
]
