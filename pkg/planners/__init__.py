# 轨迹规划模块: 学习轨迹 (动态规划) 与通信轨迹 (块坐标下降)

from .base_planner import BasePlanner, PlannerType, StepType, StepRecord
from .learning_planner import (
    InfeasibleHorizonError, DPState, LearningPlan, LearningPlanner, select_horizon,
    plan_learning_trajectory, trajectory_accumulator, trajectory_error,
    random_feasible_trajectory, monte_carlo_mse
)
from .comm_planner import (
    CommConfig, SchedulePlan, StepReport, CommPlan, CommPlanner, EvaluationResult,
    dbm_to_watts, check_feasible, throughput_upper_slot, slot_capacities, min_throughput,
    schedule_from_capacities, schedule_lp, horizontal_scp_step, altitude_scp_step,
    init_circle, bcd_optimize, evaluate_plan
)
from .baselines import (
    baseline_probabilistic, baseline_deterministic, deterministic_map, collect_calibration_measurements
)

__all__ = [
    'BasePlanner', 'PlannerType', 'StepType', 'StepRecord',
    'InfeasibleHorizonError', 'DPState', 'LearningPlan', 'LearningPlanner', 'select_horizon',
    'plan_learning_trajectory', 'trajectory_accumulator', 'trajectory_error',
    'random_feasible_trajectory', 'monte_carlo_mse',
    'CommConfig', 'SchedulePlan', 'StepReport', 'CommPlan', 'CommPlanner', 'EvaluationResult',
    'dbm_to_watts', 'check_feasible', 'throughput_upper_slot', 'slot_capacities', 'min_throughput',
    'schedule_from_capacities', 'schedule_lp', 'horizontal_scp_step', 'altitude_scp_step',
    'init_circle', 'bcd_optimize', 'evaluate_plan',
    'baseline_probabilistic', 'baseline_deterministic', 'deterministic_map', 'collect_calibration_measurements'
]
