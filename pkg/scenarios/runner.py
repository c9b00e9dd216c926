import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from channel.estimation import GramAccumulator, ParamEstimate, accumulate, mle_estimate
from channel.model import ChannelParams, Measurement, export_measurements, sample_slot_measurements
from citymap.geometry import CityMap, GroundNode, Segment, generate_city, place_nodes
from citymap.path_graph import build_path_graph
from compression.compressed_map import CompressedMap, compress_map, los_curves_frame
from planners.baselines import baseline_deterministic, baseline_probabilistic, collect_calibration_measurements
from planners.comm_planner import CommConfig, CommPlan, bcd_optimize, evaluate_plan
from planners.learning_planner import (
    LearningPlan, monte_carlo_mse, plan_learning_trajectory, random_feasible_trajectory, select_horizon
)
from .config_schema import ScenarioConfig, Variant
from .results import ResultRow, ResultTable

logger = logging.getLogger(__name__)

# 每个阶段使用独立的随机流, 互不影响
STAGE_STREAMS = {
    "map": 1,
    "nodes": 2,
    "learning": 3,
    "compression": 4,
    "calibration": 5,
    "evaluation": 6,
    "random": 7,
    "mse": 8
}


def derive_seed(seed: int, stage: str) -> int:
    return int(np.random.SeedSequence([seed, STAGE_STREAMS[stage]]).generate_state(1)[0])


@dataclass
class World:
    """一个随机种子下的地图, 节点和真实信道参数"""
    city: CityMap
    nodes: List[GroundNode]
    params: ChannelParams
    seed: int


@dataclass
class LearningOutcome:
    plan: LearningPlan
    measurements: List[Measurement]
    estimate: ParamEstimate
    learned_params: ChannelParams
    mse_optimized: float
    mse_random_median: float


def write_json(out_dir: Optional[str], config_hash: str, stage: str, payload: Dict[str, Any]) -> Optional[str]:
    """写入 <out-dir>/<hash>/<stage>.json"""
    if out_dir is None:
        return None
    folder = os.path.join(out_dir, config_hash)
    os.makedirs(folder, exist_ok=True)
    path = os.path.join(folder, f"{stage}.json")
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    return path


def artifact_path(out_dir: Optional[str], config_hash: str, name: str) -> Optional[str]:
    if out_dir is None:
        return None
    folder = os.path.join(out_dir, config_hash)
    os.makedirs(folder, exist_ok=True)
    return os.path.join(folder, name)


def build_world(config: ScenarioConfig, seed: int) -> World:
    m = config.map
    city = generate_city(extent=m.extent, street_pitch=m.street_pitch, building_fill=m.building_fill,
                         height_range=m.height_range, mean_height=m.mean_height,
                         seed=derive_seed(seed, "map"), street_width=m.street_width)
    nodes = place_nodes(city, config.K, seed=derive_seed(seed, "nodes"))
    return World(city=city, nodes=nodes, params=config.channel.to_params(), seed=seed)


def run_learning(config: ScenarioConfig, world: World) -> LearningOutcome:
    """规划学习轨迹, 沿轨迹采集测量并估计信道参数"""
    lr = config.learning
    graph = build_path_graph(world.city, lr.a_h, lr.a_v, lr.h_min, lr.h_max, lr.x_b, lr.x_t)
    N_l = select_horizon(lr.T_l, lr.a_h, lr.a_v, lr.v_max)
    plan = plan_learning_trajectory(graph, world.city, world.nodes, world.params.kappa, lr.x_b, lr.x_t, N_l,
                                    epsilon=lr.epsilon)

    rng = np.random.default_rng(derive_seed(world.seed, "learning"))
    measurements: List[Measurement] = []
    acc = GramAccumulator()
    for slot, position in enumerate(plan.waypoints):
        batch = sample_slot_measurements(world.city, world.params, world.nodes, position, rng, slot=slot,
                                         h_min=lr.h_min)
        measurements.extend(batch)
        acc = accumulate(acc, batch)
    estimate = mle_estimate(acc)

    mse_rng = np.random.default_rng(derive_seed(world.seed, "mse"))
    mse_optimized = monte_carlo_mse(plan.waypoints, world.city, world.nodes, world.params, lr.mse_trials, mse_rng)
    random_rng = np.random.default_rng(derive_seed(world.seed, "random"))
    random_mse = []
    for _ in range(lr.random_trajectories):
        vertices = random_feasible_trajectory(graph, N_l, random_rng)
        waypoints = [graph.position(v) for v in vertices]
        random_mse.append(monte_carlo_mse(waypoints, world.city, world.nodes, world.params, lr.mse_trials,
                                          mse_rng))
    return LearningOutcome(
        plan=plan,
        measurements=measurements,
        estimate=estimate,
        learned_params=estimate.to_channel_params(world.params),
        mse_optimized=mse_optimized,
        mse_random_median=float(np.median(random_mse)) if random_mse else math.nan
    )


def run_compression(config: ScenarioConfig, world: World, workers: int = 1) -> CompressedMap:
    c = config.compression
    return compress_map(world.city, world.nodes, world.params, M=c.samples, radius=c.radius,
                        h_min=config.comm.h_min, h_max=config.comm.h_max, seed=derive_seed(world.seed, "compression"),
                        l2=c.l2, tol=c.tol, max_iter=c.max_iter, holdout=c.holdout, workers=workers)


def run_comm_variant(cmap: CompressedMap, comm_config: CommConfig, variant: Variant,
                     calibration: Sequence[Measurement]) -> CommPlan:
    if variant is Variant.MAP_BASED:
        return bcd_optimize(cmap, comm_config)
    if variant is Variant.PROBABILISTIC:
        return baseline_probabilistic(cmap, comm_config)
    return baseline_deterministic(cmap, comm_config, calibration)


def run_seed(config: ScenarioConfig, seed: int, out_dir: Optional[str] = None,
             sweep_field: str = "", sweep_value: str = "") -> List[ResultRow]:
    """一个随机种子上的完整流程; 任一阶段失败只记录状态, 不中断"""
    config_hash = config.config_hash()
    rows: List[ResultRow] = []

    def row(variant: str, metric: str, value: float, status: str = "ok"):
        rows.append(ResultRow(config_hash=config_hash, seed=seed, variant=variant, metric=metric,
                              value=float(value), status=status, sweep_field=sweep_field,
                              sweep_value=sweep_value))

    try:
        world = build_world(config, seed)
        write_json(out_dir, config_hash, f"map-seed{seed}",
                   {"city": world.city.to_dict(), "nodes": [n.to_dict() for n in world.nodes]})
    except Exception as e:
        logger.error(f"种子 {seed} 地图生成失败: {str(e)}")
        row("", "map", math.nan, "failed:generate-map")
        return rows

    learning: Optional[LearningOutcome] = None
    if config.learning.enabled:
        try:
            learning = run_learning(config, world)
            row("learning", "learning_final_error", learning.plan.final_error)
            row("learning", "learning_mse_optimized", learning.mse_optimized)
            row("learning", "learning_mse_random_median", learning.mse_random_median)
            row("learning", "learned_param_error", _param_error(learning.estimate, world.params))
            write_json(out_dir, config_hash, f"learning-seed{seed}",
                       {"plan": learning.plan.to_dict(), "estimate": learning.estimate.to_dict(),
                        "learned_params": learning.learned_params.to_dict()})
            stages = artifact_path(out_dir, config_hash, f"learning-seed{seed}.csv")
            if stages:
                learning.plan.stage_frame().to_csv(stages, index=False, float_format="%.12g")
                export_measurements(learning.measurements,
                                    artifact_path(out_dir, config_hash, f"measurements-seed{seed}.csv"))
        except Exception as e:
            logger.error(f"种子 {seed} 学习阶段失败: {str(e)}")
            row("learning", "learning", math.nan, "failed:plan-learning")

    try:
        cmap = run_compression(config, world)
        write_json(out_dir, config_hash, f"compression-seed{seed}", cmap.to_dict())
        curves = artifact_path(out_dir, config_hash, f"los-curves-seed{seed}.csv")
        if curves:
            los_curves_frame(cmap).to_csv(curves, index=False, float_format="%.12g")
    except Exception as e:
        logger.error(f"种子 {seed} 地图压缩失败: {str(e)}")
        row("", "compression", math.nan, "failed:fit-los")
        return rows

    if learning is not None:
        calibration = learning.measurements
    else:
        cal_rng = np.random.default_rng(derive_seed(seed, "calibration"))
        calibration = collect_calibration_measurements(world.city, world.params, world.nodes, cal_rng,
                                                       count=config.calibration_points,
                                                       h_min=config.comm.h_min, h_max=config.comm.h_max)

    comm_config = config.comm.to_comm_config(extent=world.city.extent)
    for source in config.parameter_source:
        if source == "learned":
            if learning is None:
                row("", "learned", math.nan, "failed:plan-learning")
                continue
            source_map = cmap.with_params(learning.learned_params)
        else:
            source_map = cmap
        for variant in config.variants:
            label = variant.value if source == "true" else f"{variant.value}_learned"
            try:
                comm_config.check_map(world.city)
                plan = run_comm_variant(source_map, comm_config, variant, calibration)
                write_json(out_dir, config_hash, f"plan-{label}-seed{seed}", plan.to_dict())
                trace = artifact_path(out_dir, config_hash, f"trace-{label}-seed{seed}.csv")
                if trace:
                    plan.trace_frame().to_csv(trace, index=False, float_format="%.12g")
                row(label, "optimizer_mu", plan.mu)
                row(label, "iterations", len(plan.trace) - 1)
                row(label, "converged", float(plan.converged))
            except Exception as e:
                logger.error(f"种子 {seed} 方案 {label} 规划失败: {str(e)}")
                row(label, "optimizer_mu", math.nan, "failed:plan-comm")
                continue
            try:
                result = evaluate_plan(world.city, world.params, world.nodes, plan, trials=config.trials,
                                       seed=derive_seed(seed, "evaluation"), config=comm_config)
                write_json(out_dir, config_hash, f"evaluation-{label}-seed{seed}", result.to_dict())
                row(label, "measured_min_throughput", result.min_throughput)
            except Exception as e:
                logger.error(f"种子 {seed} 方案 {label} 评估失败: {str(e)}")
                row(label, "measured_min_throughput", math.nan, "failed:evaluate")
    return rows


def _param_error(estimate: ParamEstimate, params: ChannelParams) -> float:
    """实际一次估计的 ‖ω̂ - ω‖², 任一段秩不足时为无穷"""
    total = 0.0
    for seg in (Segment.LOS, Segment.NLOS):
        omega_hat = estimate.segment(seg).omega_hat
        if omega_hat is None:
            return math.inf
        total += float(np.sum((omega_hat - params.omega(seg)) ** 2))
    return total


def run_scenario(config: ScenarioConfig, out_dir: Optional[str] = None, workers: int = 1,
                 sweep_field: str = "", sweep_value: str = "") -> ResultTable:
    """对配置中的所有种子运行完整流程, 结果按 (种子, 方案) 排序合并"""
    table = ResultTable()
    seeds = list(config.seeds)
    desc = f"场景 {config.config_hash()}" + (f" {sweep_field}={sweep_value}" if sweep_field else "")
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_seed, config, seed, out_dir, sweep_field, sweep_value) for seed in seeds]
            for future in tqdm(futures, desc=desc, total=len(futures)):
                table.extend(future.result())
    else:
        for seed in tqdm(seeds, desc=desc):
            table.extend(run_seed(config, seed, out_dir, sweep_field, sweep_value))
    if out_dir is not None:
        write_json(out_dir, config.config_hash(), "config", config.model_dump(mode='json'))
    return table


def run_sweep(config: ScenarioConfig, field: str, values: Sequence[Any], out_dir: Optional[str] = None,
              workers: int = 1) -> ResultTable:
    """沿一个配置字段扫描, 每个取值一份独立配置 (独立哈希)"""
    if not values:
        raise ValueError(f"扫描字段 {field} 没有取值")
    table = ResultTable()
    for value in values:
        swept = config.with_override(field, value)
        logger.info(f"扫描 {field}={value}: 配置 {swept.config_hash()}")
        table.extend(run_scenario(swept, out_dir, workers, sweep_field=field, sweep_value=json.dumps(value)).rows)
    return table
