"""検索レポート - タスク分布と開始/終了位置の分布をJSON・CSVで出力"""

from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional
import csv
import json
import logging

import numpy as np

from .dataset import Dataset
from .retriever import RetrievalResult
from .synthetic import GroundTruth

logger = logging.getLogger(__name__)

TOP_TASKS = 5
OTHERS = "others"
HIST_BINS = 10


@dataclass
class TaskShare:
    task: str
    timesteps: int
    share: float


@dataclass
class Histogram:
    counts: List[int]
    edges: List[float]


@dataclass
class TaskDistributionReport:
    total_timesteps: int
    task_shares: List[TaskShare]
    start_hist: Histogram
    end_hist: Histogram
    length_hist: Histogram
    match_rows: List[Dict] = field(default_factory=list)
    relevant_share: Optional[float] = None

    def to_json(self) -> dict:
        data = asdict(self)
        data.pop("match_rows")
        return data

    def write(self, out_path) -> List[Path]:
        """JSONと2つのCSV（タスク分布、マッチ一覧）を書き出す"""
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        json_path = out.with_suffix(".json")
        json_path.write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=2), encoding="utf-8")

        tasks_path = out.with_name(out.stem + "_tasks.csv")
        with open(tasks_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["task", "timesteps", "share"])
            for s in self.task_shares:
                writer.writerow([s.task, s.timesteps, f"{s.share:.6f}"])

        matches_path = out.with_name(out.stem + "_matches.csv")
        columns = ["prior", "start", "end", "length", "rel_start", "rel_end", "task"]
        with open(matches_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=columns)
            writer.writeheader()
            writer.writerows(self.match_rows)

        logger.info(f"レポート保存: {json_path}, {tasks_path}, {matches_path}")
        return [json_path, tasks_path, matches_path]


def _histogram(values: List[float], bins: int, value_range=None) -> Histogram:
    if not values and value_range is None:
        value_range = (0.0, 1.0)
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=value_range)
    return Histogram([int(c) for c in counts], [float(e) for e in edges])


def retrieval_report(
    result: RetrievalResult,
    prior: Dataset,
    ground_truth: Optional[GroundTruth] = None,
    top_n: int = TOP_TASKS,
    bins: int = HIST_BINS,
) -> TaskDistributionReport:
    """取得タイムステップのタスク別シェア（上位top_n + others）と位置分布

    ground_truthがあればタスクIDで、なければ言語指示で集計する。
    """
    lengths = {t.id: t.length for t in prior.trajectories}
    mass: Counter = Counter()
    rows = []

    for m in result.selected:
        if ground_truth is not None:
            task = ground_truth.trajectory_tasks.get(m.trajectory_id, m.language)
        else:
            task = m.language
        mass[task] += m.length
        h = lengths.get(m.trajectory_id) or m.end
        rows.append({
            "prior": m.trajectory_id,
            "start": m.start,
            "end": m.end,
            "length": m.length,
            "rel_start": m.start / h,
            "rel_end": m.end / h,
            "task": task,
        })

    total = sum(mass.values())
    ranked = sorted(mass.items(), key=lambda kv: (-kv[1], kv[0]))
    shares = [TaskShare(task, n, n / total) for task, n in ranked[:top_n]]
    rest = sum(n for _, n in ranked[top_n:])
    shares.append(TaskShare(OTHERS, rest, rest / total if total else 0.0))

    relevant_share = None
    if ground_truth is not None:
        relevant = ground_truth.relevant_tasks()
        relevant_share = sum(n for task, n in mass.items() if task in relevant) / total if total else 0.0

    return TaskDistributionReport(
        total_timesteps=total,
        task_shares=shares,
        start_hist=_histogram([r["rel_start"] for r in rows], bins, (0.0, 1.0)),
        end_hist=_histogram([r["rel_end"] for r in rows], bins, (0.0, 1.0)),
        length_hist=_histogram([r["length"] for r in rows], bins),
        match_rows=rows,
        relevant_share=relevant_share,
    )
