import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from config import Config
from compression.compressed_map import los_curves_frame
from planners.baselines import collect_calibration_measurements
from planners.comm_planner import CommPlan, evaluate_plan
from .config_schema import ScenarioConfig, Variant, load_scenario, parse_value
from .results import ResultTable, compare
from .runner import (
    artifact_path, build_world, derive_seed, run_comm_variant, run_compression, run_learning,
    run_scenario, run_sweep, write_json
)

logger = logging.getLogger(__name__)


def setup_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                        format='%(asctime)s - %(levelname)s - %(message)s', stream=sys.stderr)


def build_config(args: argparse.Namespace) -> ScenarioConfig:
    """读取配置文件并应用命令行覆盖"""
    config = load_scenario(args.config)
    overrides = {}
    for item in args.set or []:
        if '=' not in item:
            raise ValueError(f"覆盖参数格式应为 field=value: {item}")
        field, value = item.split('=', 1)
        overrides[field] = parse_value(value)
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.variant:
        overrides["variants"] = list(args.variant)
    return config.with_overrides(overrides)


def parse_sweep(text: str):
    """--sweep comm.T_c=60,90,120"""
    if '=' not in text:
        raise ValueError(f"扫描参数格式应为 field=v1,v2,...: {text}")
    field, values = text.split('=', 1)
    return field, [parse_value(v) for v in values.split(',') if v != '']


def cmd_generate_map(config: ScenarioConfig, args) -> int:
    for seed in config.seeds:
        world = build_world(config, seed)
        path = write_json(args.out_dir, config.config_hash(), f"map-seed{seed}",
                          {"city": world.city.to_dict(), "nodes": [n.to_dict() for n in world.nodes]})
        logger.info(f"种子 {seed}: {len(world.city.buildings)} 栋建筑, 最高 {world.city.tallest:.1f} m -> {path}")
    return 0


def cmd_plan_learning(config: ScenarioConfig, args) -> int:
    config_hash = config.config_hash()
    for seed in config.seeds:
        outcome = run_learning(config, build_world(config, seed))
        write_json(args.out_dir, config_hash, f"learning-seed{seed}",
                   {"plan": outcome.plan.to_dict(), "estimate": outcome.estimate.to_dict(),
                    "learned_params": outcome.learned_params.to_dict(),
                    "mse_optimized": outcome.mse_optimized, "mse_random_median": outcome.mse_random_median})
        outcome.plan.stage_frame().to_csv(artifact_path(args.out_dir, config_hash, f"learning-seed{seed}.csv"),
                                          index=False, float_format="%.12g")
        logger.info(f"种子 {seed}: 学习误差 {outcome.plan.final_error:.6g}, 优化轨迹 MSE {outcome.mse_optimized:.6g}, "
                    f"随机轨迹 MSE 中位数 {outcome.mse_random_median:.6g}")
    return 0


def cmd_fit_los(config: ScenarioConfig, args) -> int:
    config_hash = config.config_hash()
    for seed in config.seeds:
        cmap = run_compression(config, build_world(config, seed), workers=args.workers)
        write_json(args.out_dir, config_hash, f"compression-seed{seed}", cmap.to_dict())
        los_curves_frame(cmap).to_csv(artifact_path(args.out_dir, config_hash, f"los-curves-seed{seed}.csv"),
                                      index=False, float_format="%.12g")
    return 0


def cmd_plan_comm(config: ScenarioConfig, args) -> int:
    config_hash = config.config_hash()
    for seed in config.seeds:
        world = build_world(config, seed)
        cmap = run_compression(config, world, workers=args.workers)
        learning = run_learning(config, world) if config.learning.enabled else None
        if learning is not None:
            calibration = learning.measurements
        else:
            calibration = collect_calibration_measurements(
                world.city, world.params, world.nodes, np.random.default_rng(derive_seed(seed, "calibration")),
                count=config.calibration_points, h_min=config.comm.h_min, h_max=config.comm.h_max)
        comm_config = config.comm.to_comm_config(extent=world.city.extent)
        comm_config.check_map(world.city)
        for source in config.parameter_source:
            source_map = cmap.with_params(learning.learned_params) if source == "learned" else cmap
            for variant in config.variants:
                label = variant.value if source == "true" else f"{variant.value}_learned"
                plan = run_comm_variant(source_map, comm_config, variant, calibration)
                write_json(args.out_dir, config_hash, f"plan-{label}-seed{seed}", plan.to_dict())
                plan.trace_frame().to_csv(artifact_path(args.out_dir, config_hash, f"trace-{label}-seed{seed}.csv"),
                                          index=False, float_format="%.12g")
    return 0


def cmd_evaluate(config: ScenarioConfig, args) -> int:
    with open(args.plan, 'r', encoding='utf-8') as f:
        plan = CommPlan.from_dict(json.load(f))
    seed = config.seeds[0]
    world = build_world(config, seed)
    result = evaluate_plan(world.city, world.params, world.nodes, plan, trials=config.trials,
                           seed=derive_seed(seed, "evaluation"),
                           config=config.comm.to_comm_config(extent=world.city.extent))
    stage = os.path.splitext(os.path.basename(args.plan))[0].replace("plan-", "evaluation-")
    write_json(args.out_dir, config.config_hash(), stage, result.to_dict())
    print(f"{result.min_throughput:.12g}")
    return 0


def cmd_run(config: ScenarioConfig, args) -> int:
    table = run_scenario(config, args.out_dir, workers=args.workers)
    table.write_csv(artifact_path(args.out_dir, config.config_hash(), "results.csv"))
    return 0


def cmd_sweep(config: ScenarioConfig, args) -> int:
    field, values = parse_sweep(args.sweep)
    table = run_sweep(config, field, values, args.out_dir, workers=args.workers)
    table.write_csv(artifact_path(args.out_dir, config.config_hash(), f"sweep-{field}.csv"))
    return 0


def cmd_compare(config: ScenarioConfig, args) -> int:
    tables = [ResultTable.read_csv(path) for path in args.tables]
    summary = compare(tables, metric=args.metric, reference=args.reference)
    output = args.output or os.path.join(args.out_dir, "compare.csv")
    os.makedirs(os.path.dirname(os.path.abspath(output)), exist_ok=True)
    summary.to_csv(output, index=False, float_format="%.12g")
    logger.info(f"比较结果已写入 {output}")
    return 0


COMMANDS = {
    "generate-map": cmd_generate_map,
    "plan-learning": cmd_plan_learning,
    "fit-los": cmd_fit_los,
    "plan-comm": cmd_plan_comm,
    "evaluate": cmd_evaluate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='场景配置 JSON 文件')
    common.add_argument('--seed', type=int, default=None, help='只运行单个随机种子')
    common.add_argument('--out-dir', default=Config.OUT_DIR, help='输出目录')
    common.add_argument('--variant', action='append', choices=[v.value for v in Variant], help='通信方案, 可重复')
    common.add_argument('--trials', type=int, default=None, help='评估的蒙特卡洛试验次数')
    common.add_argument('--set', action='append', metavar='FIELD=VALUE', help='按点分路径覆盖配置字段')
    common.add_argument('--workers', type=int, default=Config.WORKERS, help='并行进程数')
    common.add_argument('--log-level', default=Config.LOG_LEVEL)

    parser = argparse.ArgumentParser(description='基于地图的无人机学习与通信轨迹规划')
    sub = parser.add_subparsers(dest='command', required=True)
    for name in ("generate-map", "plan-learning", "fit-los", "plan-comm", "run"):
        sub.add_parser(name, parents=[common])
    evaluate = sub.add_parser("evaluate", parents=[common])
    evaluate.add_argument('--plan', required=True, help='plan-comm 输出的计划 JSON')
    sweep = sub.add_parser("sweep", parents=[common])
    sweep.add_argument('--sweep', required=True, help='field=v1,v2,...')
    comparison = sub.add_parser("compare", parents=[common])
    comparison.add_argument('--tables', nargs='+', required=True, help='结果表 CSV')
    comparison.add_argument('--metric', default='measured_min_throughput')
    comparison.add_argument('--reference', default=Variant.MAP_BASED.value)
    comparison.add_argument('--output', default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = build_config(args)
    except ValueError as e:
        logger.error(f"配置无效: {str(e)}")
        return 2
    logger.info(f"执行 {args.command}, 配置 {config.config_hash()}")
    return COMMANDS[args.command](config, args)


if __name__ == '__main__':
    sys.exit(main())
