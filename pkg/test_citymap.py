#!/usr/bin/env python3
"""
城市地图, 视距判断与路径图测试
"""

import os
import sys
import tempfile
import unittest

import numpy as np

sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from citymap import (
    Building, CityMap, Segment, build_action_alphabet, build_path_graph, generate_city,
    load_city, los_batch, los_check, place_nodes, rayleigh_scale_for_mean, save_city
)
from citymap.geometry import DEFAULT_HEIGHT_RANGE, clamped_rayleigh_mean


def empty_city(extent=300.0):
    return CityMap(extent=(extent, extent), buildings=())


class CityGenerationTestCase(unittest.TestCase):
    """地图生成测试"""

    def test_same_seed_same_map(self):
        """相同种子生成相同地图"""
        a = generate_city(extent=600, seed=7)
        b = generate_city(extent=600, seed=7)
        self.assertEqual(a.to_dict(), b.to_dict())
        c = generate_city(extent=600, seed=8)
        self.assertNotEqual(a.to_dict(), c.to_dict())

    def test_heights_clamped_and_mean(self):
        """建筑高度位于区间内, 大地图下样本均值接近目标"""
        city = generate_city(extent=6000, seed=3, mean_height=14.0)
        heights = np.array([b.height for b in city.buildings])
        lo, hi = DEFAULT_HEIGHT_RANGE
        self.assertTrue(np.all(heights >= lo))
        self.assertTrue(np.all(heights <= hi))
        self.assertAlmostEqual(float(heights.mean()), 14.0, delta=0.5)
        self.assertAlmostEqual(city.tallest, float(heights.max()))

    def test_rayleigh_scale(self):
        """求得的尺度参数使截断均值等于目标"""
        scale = rayleigh_scale_for_mean(20.0)
        self.assertAlmostEqual(clamped_rayleigh_mean(scale, DEFAULT_HEIGHT_RANGE), 20.0, places=8)
        with self.assertRaises(ValueError):
            rayleigh_scale_for_mean(50.0)

    def test_empty_fill(self):
        """填充率为 0 时没有建筑"""
        city = generate_city(extent=600, building_fill=0.0, seed=1)
        self.assertEqual(len(city.buildings), 0)
        self.assertEqual(city.tallest, 0.0)

    def test_invalid_arguments(self):
        """非法参数报错"""
        with self.assertRaises(ValueError):
            generate_city(extent=600, street_width=70.0, street_pitch=60.0)
        with self.assertRaises(ValueError):
            generate_city(extent=30, street_pitch=60.0)
        with self.assertRaises(ValueError):
            Building(x_min=10, x_max=5, y_min=0, y_max=1, height=3)

    def test_save_and_load(self):
        """地图文件读写"""
        city = generate_city(extent=300, seed=11)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "city.json")
            save_city(city, path)
            loaded = load_city(path)
        self.assertEqual(loaded.to_dict(), city.to_dict())
        self.assertAlmostEqual(loaded.tallest, city.tallest)


class NodePlacementTestCase(unittest.TestCase):
    """节点放置测试"""

    def test_nodes_on_streets(self):
        """节点不落在建筑占地范围内"""
        city = generate_city(extent=600, seed=5)
        nodes = place_nodes(city, 12, seed=5)
        self.assertEqual(len(nodes), 12)
        self.assertEqual([n.id for n in nodes], list(range(12)))
        xy = np.array([n.position for n in nodes])
        self.assertFalse(city.inside_footprint(xy).any())
        self.assertTrue(np.all(xy[:, 2] == 0.0))

    def test_deterministic(self):
        """相同种子放置结果相同"""
        city = generate_city(extent=600, seed=5)
        self.assertEqual(place_nodes(city, 5, seed=9), place_nodes(city, 5, seed=9))

    def test_no_free_space(self):
        """没有街道时报错"""
        city = generate_city(extent=120, street_pitch=60.0, street_width=0.0, seed=2)
        with self.assertRaises(ValueError):
            place_nodes(city, 1, seed=0, max_attempts=1000)


class LosTestCase(unittest.TestCase):
    """视距判断测试"""

    def setUp(self):
        """单栋建筑的小地图"""
        self.city = CityMap(extent=(300.0, 300.0),
                            buildings=(Building(x_min=100, x_max=200, y_min=100, y_max=200, height=50.0),))
        self.node = (50.0, 150.0, 0.0)

    def test_empty_map_is_los(self):
        """空地图处处视距"""
        self.assertIs(los_check(empty_city(), (10.0, 20.0, 60.0), (200.0, 100.0, 0.0)), Segment.LOS)

    def test_blocked_and_clear(self):
        """低空穿过建筑为非视距, 高空越过为视距"""
        self.assertIs(los_check(self.city, (250.0, 150.0, 40.0), self.node), Segment.NLOS)
        self.assertIs(los_check(self.city, (250.0, 150.0, 300.0), self.node), Segment.LOS)

    def test_segment_beside_building(self):
        """线段不经过建筑时为视距"""
        self.assertIs(los_check(self.city, (250.0, 50.0, 20.0), (50.0, 50.0, 0.0)), Segment.LOS)

    def test_non_positive_altitude(self):
        """无人机高度非正时报错"""
        with self.assertRaises(ValueError):
            los_check(self.city, (0.0, 0.0, 0.0), self.node)

    def test_batch_matches_single(self):
        """批量判断与逐点判断一致"""
        rng = np.random.default_rng(0)
        points = np.column_stack([rng.uniform(0, 300, 200), rng.uniform(0, 300, 200), rng.uniform(1, 120, 200)])
        batch = los_batch(self.city, points, self.node)
        single = [los_check(self.city, p, self.node) is Segment.LOS for p in points]
        self.assertEqual(list(batch), single)

    def test_low_segment_under_roof(self):
        """节点 (0,10,0), 建筑 x∈[40,60], y∈[5,15], 高 30: 低空被挡, 高空越过"""
        city = CityMap(extent=(200.0, 200.0),
                       buildings=(Building(x_min=40, x_max=60, y_min=5, y_max=15, height=30.0),))
        node = (0.0, 10.0, 0.0)
        self.assertIs(los_check(city, (100.0, 10.0, 20.0), node), Segment.NLOS)
        self.assertIs(los_check(city, (100.0, 10.0, 80.0), node), Segment.LOS)


class RandomMapLosTestCase(unittest.TestCase):
    """随机地图上的视距性质"""

    @classmethod
    def setUpClass(cls):
        cls.city = generate_city(extent=600, seed=1)
        nodes = place_nodes(cls.city, 20, seed=1)
        rng = np.random.default_rng(11)
        count = 300
        cls.nodes = np.array([nodes[k].position for k in rng.integers(len(nodes), size=count)])
        cls.uavs = np.column_stack([rng.uniform(0, 600, count), rng.uniform(0, 600, count),
                                    rng.uniform(1.0, 120.0, count)])

    def test_symmetric(self):
        """交换线段两端不改变结果"""
        for uav, node in zip(self.uavs, self.nodes):
            forward = bool(los_batch(self.city, uav, node)[0])
            backward = bool(los_batch(self.city, node, uav)[0])
            self.assertEqual(forward, backward)

    def test_raising_uav_keeps_los(self):
        """升高无人机不会把视距变为非视距"""
        for uav, node in zip(self.uavs, self.nodes):
            heights = uav[2] + np.array([0.0, 5.0, 20.0, 60.0, 200.0])
            points = np.column_stack([np.full(5, uav[0]), np.full(5, uav[1]), heights])
            los = los_batch(self.city, points, node)
            for lower, higher in zip(los, los[1:]):
                self.assertTrue(higher or not lower)

    def test_dense_sampling(self):
        """与沿线段密集采样的点在柱体内判断一致"""
        lo, hi = self.city.boxes
        t = np.linspace(0.0, 1.0, 10000)[:, None]
        agree = 0
        for uav, node in zip(self.uavs, self.nodes):
            points = uav[None, :] + t * (node - uav)[None, :]
            inside = np.all((points[:, None, :] >= lo[None, :, :]) & (points[:, None, :] <= hi[None, :, :]), axis=2)
            sampled_blocked = bool(inside.any())
            exact_los = bool(los_batch(self.city, uav, node)[0])
            # 采样点落在建筑内时线段必然被挡
            if sampled_blocked:
                self.assertFalse(exact_los)
            agree += int(exact_los != sampled_blocked)
        self.assertGreaterEqual(agree / len(self.uavs), 0.99)


class PathGraphTestCase(unittest.TestCase):
    """路径图测试"""

    def setUp(self):
        self.graph = build_path_graph(empty_city(300.0), a_h=100.0, a_v=20.0, h_min=50.0, h_max=90.0,
                                      base=(0.0, 0.0, 50.0), terminal=(300.0, 300.0, 50.0))

    def test_action_alphabet(self):
        """动作字母表包含 27 个动作, 位移恰好落在相邻网格点"""
        actions = build_action_alphabet(100.0, 20.0)
        self.assertEqual(len(actions), 27)
        self.assertEqual(len({a.offset for a in actions}), 27)
        for action in actions:
            expected = np.array(action.offset) * np.array([100.0, 100.0, 20.0])
            np.testing.assert_allclose(action.displacement(), expected, atol=1e-9)

    def test_grid_shape(self):
        """网格尺寸与高度层"""
        self.assertEqual(self.graph.shape, (4, 4))
        self.assertEqual(self.graph.altitude_levels, (50.0, 70.0, 90.0))
        self.assertEqual(self.graph.vertex_count, 48)
        self.assertEqual(self.graph.base, (0, 0, 0))
        self.assertEqual(self.graph.terminal, (3, 3, 0))

    def test_corner_successors(self):
        """角点顶点的后继数量 (含原地停留)"""
        succ = self.graph.successors((0, 0, 0))
        self.assertEqual(len(succ), 8)
        self.assertIn((0, (0, 0, 0)), succ)
        self.assertEqual([i for i, _ in succ], sorted(i for i, _ in succ))

    def test_hops(self):
        """对角移动下的最少步数"""
        hops = self.graph.hops_to(self.graph.terminal)
        self.assertEqual(hops[(0, 0, 0)], 3)
        self.assertEqual(hops[(3, 3, 0)], 0)

    def test_single_altitude_level(self):
        """垂直步长超过高度区间时只有一层, 垂直动作全部不可行"""
        graph = build_path_graph(empty_city(300.0), a_h=100.0, a_v=50.0, h_min=50.0, h_max=70.0,
                                 base=(0.0, 0.0, 50.0), terminal=(300.0, 300.0, 50.0))
        self.assertEqual(graph.altitude_levels, (50.0,))
        self.assertEqual(graph.vertex_count, 16)
        self.assertEqual(len(graph.successors((0, 0, 0))), 4)
        self.assertEqual(len(graph.successors((1, 1, 0))), 9)
        for _, successor in graph.successors((1, 1, 0)):
            self.assertEqual(successor[2], 0)
        self.assertEqual(graph.hops_to(graph.terminal)[graph.base], 3)

    def test_off_grid_point(self):
        """不在网格上的坐标报错"""
        with self.assertRaises(ValueError):
            self.graph.vertex_at((50.0, 0.0, 50.0))

    def test_floor_below_buildings(self):
        """最低高度低于建筑时报错"""
        city = CityMap(extent=(300.0, 300.0),
                       buildings=(Building(x_min=100, x_max=200, y_min=100, y_max=200, height=60.0),))
        with self.assertRaises(ValueError):
            build_path_graph(city, 100.0, 20.0, 50.0, 90.0, (0.0, 0.0, 50.0), (0.0, 0.0, 50.0))


if __name__ == '__main__':
    unittest.main()
