from abc import ABC, abstractmethod
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Any, Optional
from enum import Enum

logger = logging.getLogger(__name__)


class PlannerType(Enum):
    """规划器类型枚举"""
    LEARNING = "learning"            # 学习轨迹 (动态规划)
    COMMUNICATION = "communication"  # 通信轨迹 (块坐标下降)


class StepType(Enum):
    """步骤类型枚举"""
    STAGE = "stage"
    SCHEDULE = "schedule"
    HORIZONTAL = "horizontal"
    ALTITUDE = "altitude"


@dataclass
class StepRecord:
    """规划过程中的单个步骤记录"""
    step_id: str
    planner_id: str
    step_type: StepType
    description: str
    output_data: Dict[str, Any]
    success: bool
    error_message: Optional[str] = None
    execution_time: float = field(default=0.0, compare=False)

    def to_dict(self):
        # 不导出耗时, 保证结果文件可逐字节复现
        return {
            "step_id": self.step_id,
            "planner_id": self.planner_id,
            "step_type": self.step_type.value,
            "description": self.description,
            "output_data": self.output_data,
            "success": self.success,
            "error_message": self.error_message
        }


class BasePlanner(ABC):
    """规划器基类"""

    def __init__(self, planner_id: str, planner_type: PlannerType, config: Dict[str, Any]):
        self.planner_id = planner_id
        self.planner_type = planner_type
        self.config = config
        self.step_chain: List[StepRecord] = []
        self.performance_metrics = {
            "total_runs": 0,
            "successful_steps": 0,
            "failed_steps": 0,
            "average_processing_time": 0.0
        }
        self._started: Optional[float] = None

    def add_step(self, step_type: StepType, description: str, output_data: Dict[str, Any],
                 success: bool = True, execution_time: float = 0.0, error_message: Optional[str] = None) -> str:
        """添加步骤到步骤链"""
        step_id = f"{self.planner_id}_step_{len(self.step_chain)}"
        self.step_chain.append(StepRecord(
            step_id=step_id,
            planner_id=self.planner_id,
            step_type=step_type,
            description=description,
            output_data=output_data,
            success=success,
            error_message=error_message,
            execution_time=execution_time
        ))
        if success:
            self.performance_metrics["successful_steps"] += 1
        else:
            self.performance_metrics["failed_steps"] += 1
        logger.debug(f"规划器 {self.planner_id} 记录步骤: {description}")
        return step_id

    def begin_run(self):
        """开始一次规划: 步骤链只保留本次运行的记录"""
        self.step_chain = []
        self._started = time.perf_counter()

    def end_run(self) -> float:
        """结束一次规划并更新性能指标, 返回耗时"""
        elapsed = time.perf_counter() - self._started if self._started is not None else 0.0
        self.performance_metrics["total_runs"] += 1
        total = self.performance_metrics["total_runs"]
        current_avg = self.performance_metrics["average_processing_time"]
        self.performance_metrics["average_processing_time"] = (current_avg * (total - 1) + elapsed) / total
        self._started = None
        return elapsed

    def get_performance_summary(self) -> Dict[str, Any]:
        return {
            "planner_id": self.planner_id,
            "planner_type": self.planner_type.value,
            **self.performance_metrics
        }

    @abstractmethod
    def plan(self, *args, **kwargs):
        """执行规划并返回结果"""
        pass
