#!/usr/bin/env python3
"""
锥规划求解与凸性审计测试
"""

import os
import sys
import tempfile
import unittest

import cvxpy as cp
import numpy as np

sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from conic import (
    BackendRegistry, BackendResult, ConicBackend, CvxpyBackend, ProblemBuilder, SolveStatus, gain_curvature_matrix,
    dump_problem, finite_diff_hessian, leading_principal_minors, presolve, psd_check, registry, run_convexity_audit,
    solve
)


def small_lp() -> ProblemBuilder:
    """max x + y, x + 2y ≤ 4, 3x + y ≤ 6, x, y ≥ 0"""
    builder = ProblemBuilder()
    x = builder.add_variables("x", 2, lb=0.0)
    builder.add_objective(x, [1.0, 1.0])
    builder.add_inequality(x, [1.0, 2.0], 4.0)
    builder.add_inequality(x, [3.0, 1.0], 6.0)
    return builder


class ProblemBuilderTestCase(unittest.TestCase):
    """问题组装测试"""

    def test_blocks(self):
        """变量块下标连续分配, 重复命名报错"""
        builder = ProblemBuilder()
        a = builder.add_variables("a", 3)
        b = builder.add_variables("b", 2, lb=0.0, ub=1.0)
        self.assertEqual(list(a), [0, 1, 2])
        self.assertEqual(list(b), [3, 4])
        with self.assertRaises(ValueError):
            builder.add_variables("a", 1)
        problem = builder.build()
        self.assertEqual(problem.n, 5)
        self.assertEqual(list(problem.ub[3:]), [1.0, 1.0])

    def test_max_violation(self):
        """约束违反量"""
        problem = small_lp().build()
        self.assertEqual(problem.max_violation(np.array([1.0, 1.0])), 0.0)
        self.assertAlmostEqual(problem.max_violation(np.array([2.0, 2.0])), 2.0)
        self.assertAlmostEqual(problem.max_violation(np.array([-0.5, 0.0])), 0.5)

    def test_dump(self):
        """导出纯文本形式"""
        problem = small_lp().build()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "lp.txt")
            dump_problem(problem, path)
            with open(path, 'r', encoding='utf-8') as f:
                lines = f.read().splitlines()
        self.assertEqual(lines[0], "variables 2")
        self.assertEqual(sum(1 for line in lines if line.startswith("ineq")), 2)

    def test_presolve_fixed_variables(self):
        """固定变量在预处理中被移除"""
        builder = small_lp()
        builder.set_bounds(0, 1.0, 1.0)
        pre = presolve(builder.build())
        self.assertEqual(list(pre.fixed), [0])
        self.assertEqual(pre.problem.n, 1)
        self.assertFalse(pre.infeasible)


class SolveTestCase(unittest.TestCase):
    """求解测试"""

    def test_linear_program(self):
        """线性规划最优解"""
        solution = solve(small_lp().build())
        self.assertTrue(solution.usable)
        self.assertIn(solution.status, (SolveStatus.OPTIMAL, SolveStatus.INACCURATE))
        np.testing.assert_allclose(solution.x, [1.6, 1.2], atol=1e-6)
        self.assertAlmostEqual(solution.objective, 2.8, places=6)

    def test_second_order_cone(self):
        """max x, ‖(x, 0.6)‖ ≤ 1"""
        builder = ProblemBuilder()
        x = builder.add_variables("x", 1)
        builder.add_objective(x, [1.0])
        builder.add_cone([(x, [1.0], 0.0), ([], [], 0.6)], ([], [], 1.0))
        solution = solve(builder.build())
        self.assertTrue(solution.usable)
        self.assertAlmostEqual(float(solution.x[0]), 0.8, places=6)

    def test_rotated_cone(self):
        """max t, t² ≤ 2·8"""
        builder = ProblemBuilder()
        t = builder.add_variables("t", 1)
        builder.add_objective(t, [1.0])
        builder.add_rotated_cone(([], [], 2.0), ([], [], 8.0), [(t, [1.0], 0.0)])
        solution = solve(builder.build())
        self.assertTrue(solution.usable)
        self.assertAlmostEqual(float(solution.x[0]), 4.0, places=5)

    def test_fixed_variable_restored(self):
        """固定变量的取值在解中还原"""
        builder = small_lp()
        builder.set_bounds(0, 1.0, 1.0)
        solution = solve(builder.build())
        self.assertTrue(solution.usable)
        self.assertEqual(float(solution.x[0]), 1.0)
        self.assertAlmostEqual(float(solution.x[1]), 1.5, places=6)

    def test_infeasible(self):
        """x ≥ 1 且 x ≤ 0 不可行"""
        builder = ProblemBuilder()
        x = builder.add_variables("x", 1, lb=1.0)
        builder.add_objective(x, [1.0])
        builder.add_inequality(x, [1.0], 0.0)
        solution = solve(builder.build())
        self.assertIs(solution.status, SolveStatus.INFEASIBLE)
        self.assertFalse(solution.usable)

    def test_presolve_detects_infeasible(self):
        """固定变量使空行不可行时在预处理阶段即报告"""
        builder = ProblemBuilder()
        x = builder.add_variables("x", 1, lb=1.0, ub=1.0)
        builder.add_inequality(x, [1.0], 0.0)
        solution = solve(builder.build())
        self.assertIs(solution.status, SolveStatus.INFEASIBLE)
        self.assertIsNone(solution.x)

    def test_unbounded(self):
        """无约束最大化无界"""
        builder = ProblemBuilder()
        x = builder.add_variables("x", 1, lb=0.0)
        builder.add_objective(x, [1.0])
        solution = solve(builder.build())
        self.assertIs(solution.status, SolveStatus.UNBOUNDED)
        self.assertFalse(solution.usable)


class RandomInstanceTestCase(unittest.TestCase):
    """随机可行实例: 残差与 cvxpy 直接求解的最优值对照"""

    BOX = 10.0

    def check_against_reference(self, builder: ProblemBuilder, reference: float):
        solution = solve(builder.build())
        self.assertTrue(solution.usable)
        self.assertIn(solution.status, (SolveStatus.OPTIMAL, SolveStatus.INACCURATE))
        self.assertLessEqual(solution.residuals.primal, 1e-6)
        self.assertLessEqual(abs(solution.objective - reference), 1e-5 * (1.0 + abs(reference)))

    def test_random_linear_programs(self):
        """内点 x0 严格可行的随机线性规划"""
        rng = np.random.default_rng(21)
        n, m = 5, 8
        for _ in range(20):
            A = rng.normal(size=(m, n))
            x0 = rng.normal(size=n)
            b = A @ x0 + rng.uniform(0.1, 1.0, size=m)
            c = rng.normal(size=n)
            builder = ProblemBuilder()
            x = builder.add_variables("x", n, lb=-self.BOX, ub=self.BOX)
            builder.add_objective(x, c)
            for i in range(m):
                builder.add_inequality(x, A[i], b[i])

            z = cp.Variable(n)
            ref = cp.Problem(cp.Maximize(c @ z), [A @ z <= b, z >= -self.BOX, z <= self.BOX])
            ref.solve(solver=cp.CLARABEL)
            self.assertEqual(ref.status, cp.OPTIMAL)
            self.check_against_reference(builder, float(ref.value))

    def test_random_cone_programs(self):
        """‖F x + g‖ ≤ eᵀx + h, h 使 x0 留有余量"""
        rng = np.random.default_rng(22)
        n, dim, count = 5, 4, 3
        for _ in range(20):
            x0 = rng.normal(size=n)
            c = rng.normal(size=n)
            builder = ProblemBuilder()
            x = builder.add_variables("x", n, lb=-self.BOX, ub=self.BOX)
            builder.add_objective(x, c)
            z = cp.Variable(n)
            constraints = [z >= -self.BOX, z <= self.BOX]
            for _ in range(count):
                F = rng.normal(size=(dim, n))
                g = rng.normal(size=dim)
                e = rng.normal(size=n)
                h = float(np.linalg.norm(F @ x0 + g) - e @ x0 + 1.0)
                builder.add_cone([(x, F[i], g[i]) for i in range(dim)], (x, e, h))
                constraints.append(cp.norm(F @ z + g) <= e @ z + h)

            ref = cp.Problem(cp.Maximize(c @ z), constraints)
            ref.solve(solver=cp.CLARABEL)
            self.assertEqual(ref.status, cp.OPTIMAL)
            self.check_against_reference(builder, float(ref.value))


class IterationLimitTestCase(unittest.TestCase):
    """达到迭代上限时的返回值"""

    class LimitedBackend(ConicBackend):
        name = "limited"

        def __init__(self, with_iterate: bool):
            self.with_iterate = with_iterate

        def solve(self, problem, tol, max_iter):
            x = np.zeros(problem.n) if self.with_iterate else None
            return BackendResult(status=cp.USER_LIMIT, x=x, iterations=max_iter)

    def use_backend(self, with_iterate: bool) -> str:
        name = f"limited-{int(with_iterate)}"
        registry.register(name, lambda: self.LimitedBackend(with_iterate))
        self.addCleanup(registry.unregister, name)
        return name

    def test_without_iterate(self):
        """后端没有迭代点: x 为空, 不可用, 目标值为 -inf"""
        solution = solve(small_lp().build(), backend=self.use_backend(False))
        self.assertIs(solution.status, SolveStatus.MAX_ITER)
        self.assertIsNone(solution.x)
        self.assertFalse(solution.usable)
        self.assertEqual(solution.objective, -np.inf)

    def test_last_iterate_returned(self):
        """后端给出迭代点时按原坐标还原并可用"""
        solution = solve(small_lp().build(), backend=self.use_backend(True), max_iter=7)
        self.assertIs(solution.status, SolveStatus.MAX_ITER)
        self.assertTrue(solution.usable)
        np.testing.assert_allclose(solution.x, [0.0, 0.0])
        self.assertEqual(solution.objective, 0.0)
        self.assertEqual(solution.iterations, 7)


class RegistryTestCase(unittest.TestCase):
    """后端注册表测试"""

    def test_register_and_create(self):
        """注册, 创建与注销"""
        reg = BackendRegistry()
        reg.register("scs", lambda: CvxpyBackend("SCS"), {"solver": "SCS"})
        self.assertEqual(reg.create("SCS").name, "cvxpy-scs")
        reg.unregister("scs")
        with self.assertRaises(ValueError):
            reg.create("scs")


class ConvexityAuditTestCase(unittest.TestCase):
    """凸性审计测试"""

    def test_quadratic_hessian(self):
        """二次函数的差分 Hessian"""
        H = finite_diff_hessian(lambda v: v[0] ** 2 + 3.0 * v[0] * v[1] + 2.0 * v[1] ** 2, [1.0, -2.0])
        np.testing.assert_allclose(H, [[2.0, 3.0], [3.0, 4.0]], atol=1e-5)
        self.assertFalse(psd_check(H))
        with self.assertRaises(ValueError):
            finite_diff_hessian(lambda v: np.log(v[0]), [1e-9])

    def test_psd_check(self):
        """半正定判断"""
        self.assertTrue(psd_check(np.diag([1.0, 0.0])))
        with self.assertRaises(ValueError):
            psd_check(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with self.assertRaises(ValueError):
            psd_check(np.ones((2, 3)))

    def test_minors(self):
        """顺序主子式"""
        np.testing.assert_allclose(leading_principal_minors(np.array([[2.0, 1.0], [1.0, 3.0]])), [2.0, 5.0])
        self.assertTrue(np.all(leading_principal_minors(gain_curvature_matrix(1.0, 2.0, 3.0)) > 0))

    def test_audit(self):
        """随机点上三个函数的 Hessian 均半正定"""
        summary = run_convexity_audit(points=50, seed=1)
        self.assertEqual(summary["log_product"], 50)
        self.assertEqual(summary["log_one_plus_product"], 50)
        self.assertEqual(summary["capacity"], 50)
        self.assertEqual(summary["minors_positive"], 50)

    def test_audit_spans_decades(self):
        """对数均匀采样覆盖 1e-2 到 1e2, 各点凸性仍成立"""
        summary = run_convexity_audit(points=200, seed=3, low=1e-2, high=1e2)
        self.assertLess(summary["sample_min"], 0.05)
        self.assertGreater(summary["sample_max"], 20.0)
        for key in ("log_product", "log_one_plus_product", "capacity", "minors_positive"):
            self.assertEqual(summary[key], 200, key)
        with self.assertRaises(ValueError):
            run_convexity_audit(points=1, low=0.0, high=1.0)


if __name__ == '__main__':
    unittest.main()
