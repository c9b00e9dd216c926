#!/usr/bin/env python3
"""
学习轨迹规划 (动态规划) 测试
"""

import math
import os
import sys
import unittest

import numpy as np

sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from channel.model import ChannelParams
from citymap import Building, CityMap, GroundNode, Segment, build_path_graph
from planners import (
    InfeasibleHorizonError, LearningPlanner, monte_carlo_mse, plan_learning_trajectory,
    random_feasible_trajectory, select_horizon, trajectory_accumulator, trajectory_error
)


def blocked_city():
    """一栋建筑把两个节点分隔在两侧"""
    city = CityMap(extent=(300.0, 300.0),
                   buildings=(Building(x_min=100, x_max=200, y_min=100, y_max=200, height=40.0),))
    nodes = [GroundNode(id=0, position=(150.0, 90.0, 0.0)), GroundNode(id=1, position=(150.0, 210.0, 0.0))]
    return city, nodes


class HorizonTestCase(unittest.TestCase):
    """学习时域测试"""

    def test_horizon(self):
        """N_l = ⌊T_l / T_e⌋"""
        self.assertEqual(select_horizon(21.0, 2.0, 1.0, 1.0), 7)
        self.assertEqual(select_horizon(23.9, 2.0, 1.0, 1.0), 7)

    def test_horizon_grows_with_duration(self):
        """学习时长增加时规划步数不减少"""
        horizons = [select_horizon(T_l, 2.0, 1.0, 1.0) for T_l in np.arange(6.0, 60.0, 1.5)]
        self.assertEqual(horizons, sorted(horizons))

    def test_too_short(self):
        """时域不足两个阶段时报错"""
        with self.assertRaises(ValueError):
            select_horizon(5.0, 2.0, 1.0, 1.0)
        with self.assertRaises(ValueError):
            select_horizon(10.0, 2.0, 1.0, 0.0)


class LearningPlannerTestCase(unittest.TestCase):
    """动态规划测试"""

    def setUp(self):
        self.city = CityMap(extent=(300.0, 300.0), buildings=())
        self.nodes = [GroundNode(id=0, position=(40.0, 60.0, 0.0)),
                      GroundNode(id=1, position=(250.0, 120.0, 0.0)),
                      GroundNode(id=2, position=(150.0, 280.0, 0.0))]
        self.graph = build_path_graph(self.city, 100.0, 20.0, 50.0, 70.0,
                                      base=(0.0, 0.0, 50.0), terminal=(200.0, 200.0, 50.0))

    def test_plan_reaches_terminal(self):
        """轨迹从起点出发, 在第 N_l 阶段到达终点, 每步沿图的边移动"""
        plan = plan_learning_trajectory(self.graph, self.city, self.nodes, 2.5,
                                        (0.0, 0.0, 50.0), (200.0, 200.0, 50.0), N_l=5)
        self.assertEqual(len(plan.waypoints), 5)
        self.assertEqual(len(plan.actions), 4)
        self.assertEqual(plan.vertices[0], self.graph.base)
        self.assertEqual(plan.vertices[-1], self.graph.terminal)
        for u, v in zip(plan.vertices, plan.vertices[1:]):
            self.assertTrue(self.graph.graph.has_edge(u, v))
        self.assertEqual(list(plan.stage_frame()["stage"]), [1, 2, 3, 4, 5])

    def test_missing_segment_is_infinite(self):
        """全视距地图上非视距段无数据, 最终误差为显式无穷"""
        plan = plan_learning_trajectory(self.graph, self.city, self.nodes, 2.5,
                                        (0.0, 0.0, 50.0), (200.0, 200.0, 50.0), N_l=4)
        self.assertEqual(plan.final_error, math.inf)
        self.assertEqual(plan.to_dict()["final_error"], "inf")

    def test_infeasible_horizon(self):
        """终点在时域内不可达"""
        with self.assertRaises(InfeasibleHorizonError) as ctx:
            plan_learning_trajectory(self.graph, self.city, self.nodes, 2.5,
                                     (0.0, 0.0, 50.0), (200.0, 200.0, 50.0), N_l=2)
        self.assertEqual(ctx.exception.min_stages, 3)

    def test_single_label_no_worse_than_enumeration_bound(self):
        """穷举标签得到的正则化代价不高于单标签启发式"""
        kwargs = dict(x_b=(0.0, 0.0, 50.0), x_t=(100.0, 100.0, 50.0), N_l=4)
        heuristic = plan_learning_trajectory(self.graph, self.city, self.nodes, 2.5, **kwargs)
        exact = plan_learning_trajectory(self.graph, self.city, self.nodes, 2.5, keep_all_labels=True, **kwargs)
        tol = 1e-9 * abs(heuristic.regularized_cost)
        self.assertLessEqual(exact.regularized_cost, heuristic.regularized_cost + tol)

    def test_additive_cost_matches_enumeration(self):
        """可加阶段代价下单标签递推与穷举一致"""
        def cost(u, v, stage):
            return float(v[2] + 0.1 * abs(v[0] - v[1]) + 0.01 * stage)

        kwargs = dict(x_b=(0.0, 0.0, 50.0), x_t=(200.0, 100.0, 70.0), N_l=4, stage_cost_fn=cost)
        dp = plan_learning_trajectory(self.graph, self.city, self.nodes, 2.5, **kwargs)
        exact = plan_learning_trajectory(self.graph, self.city, self.nodes, 2.5, keep_all_labels=True, **kwargs)
        self.assertAlmostEqual(dp.regularized_cost, exact.regularized_cost, places=9)

    def test_stage_cost_is_negative_improvement(self):
        """阶段代价为负的误差改善量"""
        planner = LearningPlanner(self.graph, self.city, self.nodes, 2.5)
        state = planner.initial_state(self.graph.base)
        self.assertEqual(state.ranks[Segment.LOS], 2)
        self.assertEqual(state.ranks[Segment.NLOS], 0)
        index, successor = planner.graph.successors(self.graph.base)[1]
        child = planner.transition(state, index, successor)
        self.assertLessEqual(child.stage_cost, 0.0)
        self.assertAlmostEqual(planner.stage_cost(state, index), child.stage_cost)
        with self.assertRaises(ValueError):
            planner.stage_cost(state, 999)

    def test_step_chain_per_run(self):
        """重复规划时步骤链只保留最近一次运行"""
        planner = LearningPlanner(self.graph, self.city, self.nodes, 2.5)
        planner.plan((0.0, 0.0, 50.0), (200.0, 200.0, 50.0), N_l=4)
        planner.plan((0.0, 0.0, 50.0), (200.0, 200.0, 50.0), N_l=5)
        self.assertEqual(len(planner.step_chain), 4)
        self.assertEqual([s.output_data["stage"] for s in planner.step_chain], [2, 3, 4, 5])
        summary = planner.get_performance_summary()
        self.assertEqual(summary["total_runs"], 2)
        self.assertEqual(summary["successful_steps"], 3 + 4)

    def test_random_trajectory(self):
        """随机轨迹同样满足起终点约束"""
        rng = np.random.default_rng(4)
        for _ in range(20):
            path = random_feasible_trajectory(self.graph, 5, rng)
            self.assertEqual(len(path), 5)
            self.assertEqual(path[0], self.graph.base)
            self.assertEqual(path[-1], self.graph.terminal)


class HorizonTrendTestCase(unittest.TestCase):
    """规划步数增加时估计误差的变化"""

    def test_error_falls_with_horizon(self):
        """穷举下正则化代价与期望均方误差随 N_l 增加而不增"""
        city, nodes = blocked_city()
        params = ChannelParams()
        graph = build_path_graph(city, 150.0, 20.0, 50.0, 70.0, base=(0.0, 0.0, 50.0), terminal=(300.0, 300.0, 50.0))
        costs, mses = [], []
        for N_l in (3, 4, 5):
            plan = plan_learning_trajectory(graph, city, nodes, params.kappa, (0.0, 0.0, 50.0),
                                            (300.0, 300.0, 50.0), N_l=N_l, keep_all_labels=True)
            costs.append(plan.regularized_cost)
            mses.append(params.sigma2_los * plan.final_error)
        for shorter, longer in zip(costs, costs[1:]):
            self.assertLessEqual(longer, shorter + 1e-9 * abs(shorter))
        for shorter, longer in zip(mses, mses[1:]):
            self.assertLessEqual(longer, shorter * (1.0 + 1e-3))
        self.assertTrue(math.isfinite(mses[-1]))


class EstimationErrorTestCase(unittest.TestCase):
    """轨迹估计误差测试"""

    def setUp(self):
        self.city, self.nodes = blocked_city()
        self.params = ChannelParams()
        self.waypoints = [(150.0, 0.0, 50.0), (150.0, 300.0, 70.0)]

    def test_both_segments_observed(self):
        """两个航点分别看到不同节点的视距与非视距链路"""
        acc = trajectory_accumulator(self.waypoints, self.city, self.nodes)
        self.assertEqual(acc.los.count, 2)
        self.assertEqual(acc.nlos.count, 2)
        self.assertTrue(math.isfinite(trajectory_error(self.waypoints, self.city, self.nodes, 2.5)))

    def test_monte_carlo_matches_trace(self):
        """蒙特卡洛均方误差接近 σ²_LoS tr(H_LoS) + σ²_NLoS tr(H_NLoS)"""
        acc = trajectory_accumulator(self.waypoints, self.city, self.nodes)
        expected = (self.params.sigma2_los * np.trace(acc.los.H) +
                    self.params.sigma2_nlos * np.trace(acc.nlos.H))
        mse = monte_carlo_mse(self.waypoints, self.city, self.nodes, self.params, 20000,
                              np.random.default_rng(0))
        self.assertAlmostEqual(mse / expected, 1.0, delta=0.1)

    def test_rank_deficient_trajectory(self):
        """只观测到一个传播段时均方误差为无穷"""
        mse = monte_carlo_mse(self.waypoints[:1], self.city, self.nodes, self.params, 100,
                              np.random.default_rng(0))
        self.assertEqual(mse, math.inf)


if __name__ == '__main__':
    unittest.main()
