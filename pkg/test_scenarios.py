#!/usr/bin/env python3
"""
场景配置, 结果表与端到端流程测试
"""

import json
import os
import sys
import tempfile
import unittest

import pandas as pd
from pydantic import ValidationError

sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from scenarios import (
    CommSection, CompressionSection, LearningSection, MapSection, RESULT_COLUMNS, ResultRow, ResultTable,
    ScenarioConfig, Variant, compare, derive_seed, load_scenario, parse_value, run_scenario, run_seed,
    run_sweep, save_scenario
)
from scenarios.main import main


def small_scenario(**overrides) -> ScenarioConfig:
    """小规模场景, 用于端到端测试"""
    values = dict(
        K=2, seeds=[0], trials=20, calibration_points=10,
        map=MapSection(extent=300.0),
        learning=LearningSection(x_t=(300.0, 300.0, 50.0), h_max=90.0, random_trajectories=3, mse_trials=10),
        compression=CompressionSection(samples=100, radius=150.0),
        comm=CommSection(T_c=20.0, N_c=8, max_iter=2)
    )
    values.update(overrides)
    return ScenarioConfig(**values)


def throughput_table(offset: float = 1.0) -> ResultTable:
    table = ResultTable()
    for seed in reversed(range(5)):
        table.append(ResultRow(config_hash="abc", seed=seed, variant="map_based",
                               metric="measured_min_throughput", value=10.0 + seed))
        table.append(ResultRow(config_hash="abc", seed=seed, variant="probabilistic",
                               metric="measured_min_throughput", value=10.0 + seed - offset))
    return table


class ScenarioConfigTestCase(unittest.TestCase):
    """场景配置测试"""

    def test_defaults_and_hash(self):
        """默认配置合法, 哈希为 12 位且稳定"""
        config = ScenarioConfig()
        self.assertEqual(len(config.config_hash()), 12)
        self.assertEqual(config.config_hash(), ScenarioConfig().config_hash())
        self.assertEqual(config.variants, [Variant.MAP_BASED, Variant.PROBABILISTIC, Variant.DETERMINISTIC])

    def test_override(self):
        """点分路径覆盖字段, 哈希随之改变"""
        config = ScenarioConfig()
        swept = config.with_override("comm.T_c", 60)
        self.assertEqual(swept.comm.T_c, 60.0)
        self.assertNotEqual(swept.config_hash(), config.config_hash())
        with self.assertRaises(ValueError):
            config.with_override("comm.unknown", 1)
        with self.assertRaises(ValueError):
            config.with_override("nothing.T_c", 1)

    def test_validation(self):
        """不一致的配置被拒绝"""
        with self.assertRaises(ValueError):
            ScenarioConfig(comm=CommSection(h_min=30.0))
        with self.assertRaises(ValueError):
            ScenarioConfig(learning=LearningSection(x_b=(50.0, 0.0, 50.0)))
        with self.assertRaises(ValueError):
            ScenarioConfig(learning=LearningSection(enabled=False), parameter_source=["learned"])
        with self.assertRaises(ValueError):
            ScenarioConfig(seeds=[])
        with self.assertRaises(ValidationError):
            ScenarioConfig.model_validate({"unknown": 1})
        with self.assertRaises(ValueError):
            ScenarioConfig(schema_version=99)

    def test_save_and_load(self):
        """配置文件读写保持哈希"""
        config = small_scenario()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "scenario.json")
            save_scenario(config, path)
            self.assertEqual(load_scenario(path).config_hash(), config.config_hash())

    def test_parse_value(self):
        """覆盖值按 JSON 解析"""
        self.assertEqual(parse_value("60"), 60)
        self.assertEqual(parse_value("[1, 2]"), [1, 2])
        self.assertEqual(parse_value("true"), True)
        self.assertEqual(parse_value("map_based"), "map_based")

    def test_derive_seed(self):
        """各阶段的随机流互相独立且可复现"""
        self.assertEqual(derive_seed(3, "map"), derive_seed(3, "map"))
        self.assertNotEqual(derive_seed(3, "map"), derive_seed(3, "nodes"))
        self.assertNotEqual(derive_seed(3, "map"), derive_seed(4, "map"))


class ResultTableTestCase(unittest.TestCase):
    """结果表与比较测试"""

    def test_append_only_rows(self):
        """只接受 ResultRow"""
        table = ResultTable()
        with self.assertRaises(ValueError):
            table.append({"seed": 0})
        self.assertEqual(len(table), 0)

    def test_sorted_frame(self):
        """数据表按种子排序"""
        frame = throughput_table().to_frame()
        self.assertEqual(list(frame.columns), RESULT_COLUMNS)
        self.assertEqual(list(frame["seed"]), sorted(frame["seed"]))

    def test_csv(self):
        """结果表 CSV 读写"""
        table = throughput_table()
        table.append(ResultRow(config_hash="abc", seed=9, variant="map_based", metric="learning_final_error",
                               value=float("inf")))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "results.csv")
            table.write_csv(path)
            loaded = ResultTable.read_csv(path)
        pd.testing.assert_frame_equal(loaded.to_frame(), table.to_frame())

    def test_schema_mismatch(self):
        """列不一致时报错"""
        with self.assertRaises(ValueError):
            ResultTable.from_frame(pd.DataFrame({"seed": [0]}))

    def test_compare_variants(self):
        """单表比较: 参考方案对其余方案"""
        summary = compare([throughput_table()], reference="map_based")
        self.assertEqual(len(summary), 1)
        row = summary.iloc[0]
        self.assertEqual(row["baseline"], "probabilistic")
        self.assertEqual(row["n_pairs"], 5)
        self.assertAlmostEqual(row["median_difference"], 1.0)
        self.assertAlmostEqual(row["win_rate"], 1.0)
        self.assertAlmostEqual(row["sign_test_p"], 0.0625)

    def test_compare_identical_tables(self):
        """两张相同的表逐方案差值为 0"""
        summary = compare([throughput_table(), throughput_table()])
        self.assertEqual(len(summary), 2)
        self.assertTrue((summary["median_difference"] == 0.0).all())
        self.assertTrue((summary["win_rate"] == 0.0).all())
        self.assertTrue((summary["sign_test_p"] == 1.0).all())

    def test_compare_errors(self):
        """空输入或缺少参考方案时报错"""
        with self.assertRaises(ValueError):
            compare([])
        with self.assertRaises(ValueError):
            compare([ResultTable()])
        with self.assertRaises(ValueError):
            compare([throughput_table()], reference="deterministic")


class EndToEndTestCase(unittest.TestCase):
    """端到端流程测试"""

    @classmethod
    def setUpClass(cls):
        cls.config = small_scenario()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.table = run_scenario(cls.config, out_dir=cls.tmp.name)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_all_variants_reported(self):
        """每个方案都有规划值与实测吞吐量"""
        frame = self.table.to_frame()
        self.assertTrue((frame["status"] == "ok").all())
        for variant in ("map_based", "probabilistic", "deterministic"):
            metrics = set(frame[frame["variant"] == variant]["metric"])
            self.assertIn("optimizer_mu", metrics)
            self.assertIn("measured_min_throughput", metrics)
        self.assertIn("learning_final_error", set(frame["metric"]))
        self.assertTrue((frame["config_hash"] == self.config.config_hash()).all())

    def test_artifacts(self):
        """输出目录按配置哈希组织"""
        folder = os.path.join(self.tmp.name, self.config.config_hash())
        for name in ("config.json", "map-seed0.json", "learning-seed0.json", "compression-seed0.json",
                     "plan-map_based-seed0.json", "trace-map_based-seed0.csv", "evaluation-deterministic-seed0.json"):
            self.assertTrue(os.path.exists(os.path.join(folder, name)), name)
        with open(os.path.join(folder, "plan-map_based-seed0.json"), 'r', encoding='utf-8') as f:
            plan = json.load(f)
        self.assertEqual(len(plan["waypoints"]), 8)

    def test_reproducible(self):
        """相同配置与种子得到相同结果"""
        again = ResultTable(run_seed(self.config, 0))
        pd.testing.assert_frame_equal(again.to_frame(), self.table.to_frame())

    def test_failed_stage_recorded(self):
        """地图阶段失败只记录状态"""
        config = small_scenario(map=MapSection(extent=300.0, street_width=0.0))
        rows = run_seed(config, 0)
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0].status, "failed:generate-map")

    def test_sweep(self):
        """扫描字段的每个取值都有独立记录"""
        config = small_scenario(learning=LearningSection(enabled=False), variants=[Variant.MAP_BASED])
        table = run_sweep(config, "comm.T_c", [20, 24])
        frame = table.to_frame()
        self.assertEqual(set(frame["sweep_value"]), {"20", "24"})
        self.assertTrue((frame["sweep_field"] == "comm.T_c").all())
        self.assertEqual(len(set(frame["config_hash"])), 2)
        with self.assertRaises(ValueError):
            run_sweep(config, "comm.T_c", [])


class CliTestCase(unittest.TestCase):
    """命令行测试"""

    def test_generate_map(self):
        """generate-map 写出地图文件"""
        with tempfile.TemporaryDirectory() as tmp:
            code = main(["generate-map", "--out-dir", tmp, "--seed", "5", "--set", "K=3"])
            self.assertEqual(code, 0)
            folders = os.listdir(tmp)
            self.assertEqual(len(folders), 1)
            with open(os.path.join(tmp, folders[0], "map-seed5.json"), 'r', encoding='utf-8') as f:
                data = json.load(f)
        self.assertEqual(len(data["nodes"]), 3)

    def test_invalid_config(self):
        """非法覆盖返回退出码 2"""
        self.assertEqual(main(["generate-map", "--set", "comm.h_min=10"]), 2)
        self.assertEqual(main(["generate-map", "--set", "comm.nothing=1"]), 2)

    def test_compare(self):
        """compare 写出比较表"""
        with tempfile.TemporaryDirectory() as tmp:
            a = os.path.join(tmp, "a.csv")
            b = os.path.join(tmp, "b.csv")
            throughput_table().write_csv(a)
            throughput_table(offset=2.0).write_csv(b)
            output = os.path.join(tmp, "compare.csv")
            self.assertEqual(main(["compare", "--tables", a, b, "--output", output]), 0)
            summary = pd.read_csv(output)
        self.assertEqual(len(summary), 2)


if __name__ == '__main__':
    unittest.main()
