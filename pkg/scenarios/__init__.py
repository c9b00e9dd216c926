# 场景编排: 配置解析, 端到端运行, 参数扫描与结果比较

from .config_schema import (
    SCHEMA_VERSION, Variant, MapSection, ChannelSection, LearningSection, CompressionSection, CommSection,
    ScenarioConfig, load_scenario, save_scenario, parse_value
)
from .results import RESULT_COLUMNS, ResultRow, ResultTable, check_schema, compare
from .runner import (
    World, LearningOutcome, derive_seed, build_world, run_learning, run_compression, run_comm_variant,
    run_seed, run_scenario, run_sweep
)

__all__ = [
    'SCHEMA_VERSION', 'Variant', 'MapSection', 'ChannelSection', 'LearningSection', 'CompressionSection',
    'CommSection', 'ScenarioConfig', 'load_scenario', 'save_scenario', 'parse_value',
    'RESULT_COLUMNS', 'ResultRow', 'ResultTable', 'check_schema', 'compare',
    'World', 'LearningOutcome', 'derive_seed', 'build_world', 'run_learning', 'run_compression',
    'run_comm_variant', 'run_seed', 'run_scenario', 'run_sweep'
]
