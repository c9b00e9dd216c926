import logging
import math
from dataclasses import dataclass, asdict
from typing import Iterable, List, Optional, Sequence, Union

import pandas as pd
from scipy.stats import binomtest

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["config_hash", "seed", "variant", "sweep_field", "sweep_value", "metric", "value", "status"]
SORT_KEYS = ["sweep_field", "sweep_value", "seed", "variant", "metric"]


@dataclass(frozen=True)
class ResultRow:
    """一条结果记录, 携带完整溯源信息"""
    config_hash: str
    seed: int
    variant: str
    metric: str
    value: float
    status: str = "ok"
    sweep_field: str = ""
    sweep_value: str = ""

    def to_dict(self):
        return asdict(self)


class ResultTable:
    """只追加的结果表"""

    def __init__(self, rows: Optional[Iterable[ResultRow]] = None):
        self._rows: List[ResultRow] = []
        for row in rows or []:
            self.append(row)

    def append(self, row: ResultRow) -> None:
        if not isinstance(row, ResultRow):
            raise ValueError(f"结果表只接受 ResultRow, 收到 {type(row).__name__}")
        self._rows.append(row)

    def extend(self, rows: Iterable[ResultRow]) -> None:
        for row in rows:
            self.append(row)

    @property
    def rows(self) -> List[ResultRow]:
        return list(self._rows)

    def __len__(self) -> int:
        return len(self._rows)

    def to_frame(self) -> pd.DataFrame:
        """按 (扫描值, 种子, 方案, 指标) 排序的数据表"""
        frame = pd.DataFrame([r.to_dict() for r in self._rows], columns=RESULT_COLUMNS)
        if frame.empty:
            return frame
        return frame.sort_values(SORT_KEYS, kind="mergesort").reset_index(drop=True)

    def write_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g")
        logger.info(f"结果表已写入 {path} ({len(self)} 行)")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'ResultTable':
        check_schema(frame)
        table = cls()
        for record in frame.to_dict(orient="records"):
            table.append(ResultRow(
                config_hash=str(record["config_hash"]),
                seed=int(record["seed"]),
                variant=str(record["variant"]),
                metric=str(record["metric"]),
                value=float(record["value"]),
                status=str(record["status"]),
                sweep_field="" if pd.isna(record["sweep_field"]) else str(record["sweep_field"]),
                sweep_value="" if pd.isna(record["sweep_value"]) else str(record["sweep_value"])
            ))
        return table

    @classmethod
    def read_csv(cls, path: str) -> 'ResultTable':
        return cls.from_frame(pd.read_csv(path, dtype={"sweep_value": str, "sweep_field": str, "config_hash": str}))


def check_schema(frame: pd.DataFrame) -> None:
    if list(frame.columns) != RESULT_COLUMNS:
        raise ValueError(f"结果表列不一致: {list(frame.columns)}")


def _as_frame(table: Union[ResultTable, pd.DataFrame]) -> pd.DataFrame:
    frame = table.to_frame() if isinstance(table, ResultTable) else table
    check_schema(frame)
    return frame


def _paired_summary(arm: pd.Series, base: pd.Series) -> dict:
    joined = pd.concat([arm.rename("arm"), base.rename("base")], axis=1, join="inner").dropna()
    diff = joined["arm"] - joined["base"]
    wins = int((diff > 0).sum())
    losses = int((diff < 0).sum())
    decided = wins + losses
    return {
        "n_pairs": int(len(joined)),
        "median_arm": float(joined["arm"].median()) if len(joined) else math.nan,
        "median_baseline": float(joined["base"].median()) if len(joined) else math.nan,
        "median_difference": float(diff.median()) if len(joined) else math.nan,
        "win_rate": wins / len(joined) if len(joined) else math.nan,
        "sign_test_p": float(binomtest(wins, decided, 0.5).pvalue) if decided else 1.0
    }


def compare(tables: Sequence[Union[ResultTable, pd.DataFrame]], metric: str = "measured_min_throughput",
            reference: str = "map_based") -> pd.DataFrame:
    """按种子配对比较

    只给一张表时, 每个方案与 reference 方案配对比较;
    给多张表时, 第 i 张表的每个方案与第 0 张表的同名方案配对比较.
    """
    if not tables:
        raise ValueError("比较至少需要一张结果表")
    frames = [_as_frame(t) for t in tables]
    if all(frame.empty for frame in frames):
        raise ValueError("结果表为空, 无法比较")
    rows = []

    def values(frame: pd.DataFrame, variant: str, sweep: tuple) -> pd.Series:
        sel = frame[(frame["metric"] == metric) & (frame["status"] == "ok") & (frame["variant"] == variant) &
                    (frame["sweep_field"].fillna("") == sweep[0]) & (frame["sweep_value"].fillna("") == sweep[1])]
        return sel.set_index("seed")["value"].astype(float)

    base = frames[0]
    sweeps = sorted({(str(f) if isinstance(f, str) else "", str(v) if isinstance(v, str) else "")
                     for f, v in zip(base["sweep_field"], base["sweep_value"])})
    if len(frames) == 1:
        variants = sorted(set(base["variant"]) - {reference})
        if reference not in set(base["variant"]):
            raise ValueError(f"结果表中没有参考方案 {reference}")
        for sweep in sweeps:
            ref = values(base, reference, sweep)
            for variant in variants:
                rows.append({"sweep_field": sweep[0], "sweep_value": sweep[1], "arm": reference,
                             "baseline": variant, **_paired_summary(ref, values(base, variant, sweep))})
    else:
        for i, frame in enumerate(frames[1:], start=1):
            for sweep in sweeps:
                for variant in sorted(set(base["variant"])):
                    rows.append({"sweep_field": sweep[0], "sweep_value": sweep[1], "arm": f"table{i}:{variant}",
                                 "baseline": f"table0:{variant}",
                                 **_paired_summary(values(frame, variant, sweep), values(base, variant, sweep))})
    summary = pd.DataFrame(rows)
    logger.info(f"比较完成: {len(summary)} 组配对, 指标 {metric}")
    return summary
