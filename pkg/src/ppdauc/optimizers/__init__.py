"""Stochastic min-max solvers for AUC maximisation and their schedules."""
from .baselines import (
    ce_gradient,
    ce_sgd_run,
    ce_step_size,
    oauc_run,
    oauc_step_size,
    pga_run,
    pga_schedule,
    project_ball,
)
from .ppd import adagrad_update, ppd_adagrad_run, ppd_sg_run, stopping_threshold
from .schedules import (
    ScheduleParams,
    StagePlan,
    constant_C,
    plan_stage,
    schedule_practical,
    schedule_theoretical,
)
from .trace import CSV_HEADER, Monitor, RunTrace, TraceRecord

__all__ = [
    "ScheduleParams", "StagePlan", "constant_C", "plan_stage", "schedule_practical", "schedule_theoretical",
    "ppd_sg_run", "ppd_adagrad_run", "adagrad_update", "stopping_threshold",
    "pga_run", "pga_schedule", "project_ball", "oauc_run", "oauc_step_size", "ce_sgd_run", "ce_step_size", "ce_gradient",
    "Monitor", "RunTrace", "TraceRecord", "CSV_HEADER",
]
