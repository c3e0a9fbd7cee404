"""検索品質の評価 - 正解スキルラベルとの一致率とタスクの疎さ

ablation: 同じ合成データでSTRAP（部分軌跡）、固定長ウィンドウ、D-T（軌跡全体）、D-S（単一状態）を比較
"""

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import statistics
import time

from .baselines import DEFAULT_PAD_H, baseline_full_trajectory, baseline_state_retrieval
from .errors import UnknownId
from .retriever import RetrievalConfig, RetrievalResult, default_threads, retrieve
from .segmentation import DEFAULT_WINDOW, MIN_CHUNK_LEN, SegmentationConfig
from .synthetic import GroundTruth, SynthConfig, generate_synthetic, with_seed

logger = logging.getLogger(__name__)

METHODS = ("strap", "window", "full_trajectory", "state")


@dataclass
class EvalMetrics:
    """評価指標

    precision_at_k: 取得タイムステップのうち、クエリの多数派スキルと一致する割合
    task_sparsity: 取得元の事前タスク数
    """
    precision_at_k: float
    task_sparsity: int
    task_shares: Dict[str, float] = field(default_factory=dict)
    relevant_share: Optional[float] = None
    retrieved_timesteps: int = 0
    empty: bool = False


def majority_skill(labels: Sequence[int]) -> int:
    """最頻のスキル（同数なら小さいID）"""
    counts = Counter(labels)
    return min(counts, key=lambda s: (-counts[s], s))


def _labels(gt: GroundTruth, traj_id: str) -> List[int]:
    try:
        return gt.labels[traj_id]
    except KeyError:
        raise UnknownId(f"正解ラベルにない軌跡: {traj_id}") from None


def evaluate(result: RetrievalResult, gt: GroundTruth) -> EvalMetrics:
    if not result.selected:
        return EvalMetrics(precision_at_k=0.0, task_sparsity=0, empty=True)

    majority: Dict[Tuple[str, int, int], int] = {}
    agree = 0
    mass: Counter = Counter()

    for m in result.selected:
        q = m.query
        key = (q.trajectory_id, q.start, q.end)
        if key not in majority:
            majority[key] = majority_skill(_labels(gt, q.trajectory_id)[q.start:q.end])
        retrieved = _labels(gt, m.trajectory_id)[m.start:m.end]
        agree += sum(1 for s in retrieved if s == majority[key])
        # タスク対応がなければ軌跡自体を1タスクとみなす
        mass[gt.trajectory_tasks.get(m.trajectory_id, m.trajectory_id)] += len(retrieved)

    total = sum(mass.values())
    relevant_share = None
    if gt.target_task in gt.tasks:
        relevant = gt.relevant_tasks()
        relevant_share = sum(n for task, n in mass.items() if task in relevant) / total

    return EvalMetrics(
        precision_at_k=agree / total,
        task_sparsity=len(mass),
        task_shares={task: n / total for task, n in sorted(mass.items())},
        relevant_share=relevant_share,
        retrieved_timesteps=total,
    )


@dataclass
class AblationRow:
    seed: int
    k: int
    method: str
    precision_at_k: float
    task_sparsity: int
    relevant_share: Optional[float]
    retrieved_timesteps: int
    wall_ms: float


@dataclass
class AblationSummary:
    method: str
    k: int
    mean_precision: float
    std_precision: float
    mean_task_sparsity: float
    mean_relevant_share: Optional[float]


@dataclass
class AblationReport:
    rows: List[AblationRow]
    summary: List[AblationSummary]

    def get(self, method: str, k: int) -> AblationSummary:
        for s in self.summary:
            if s.method == method and s.k == k:
                return s
        raise KeyError((method, k))

    def to_json(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "summary": [asdict(s) for s in self.summary],
        }


def _timed(fn, *args, **kwargs) -> Tuple[RetrievalResult, float]:
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, (time.perf_counter() - start) * 1000


def run_ablation(
    cfg: SynthConfig,
    seeds: Sequence[int],
    ks: Sequence[int] = (100,),
    pad_h: int = DEFAULT_PAD_H,
    threads: Optional[int] = None,
    min_len: int = MIN_CHUNK_LEN,
    window: int = DEFAULT_WINDOW,
) -> AblationReport:
    """シードごとに合成データを作り、4手法をk値ごとに評価"""
    rows: List[AblationRow] = []
    seg_cfg = SegmentationConfig(epsilon=cfg.recommended_epsilon, min_len=min_len)
    window_cfg = SegmentationConfig(epsilon=0.0, method="window", window=window)

    for seed in seeds:
        prior, target, gt = generate_synthetic(with_seed(cfg, seed))
        for k in ks:
            n_threads = threads or default_threads()
            retrieval_cfg = RetrievalConfig(segmentation=seg_cfg, k=k, threads=n_threads)
            window_retrieval = RetrievalConfig(segmentation=window_cfg, k=k, threads=n_threads)
            runs = {
                "strap": _timed(retrieve, target, prior, retrieval_cfg),
                "window": _timed(retrieve, target, prior, window_retrieval),
                "full_trajectory": _timed(baseline_full_trajectory, target, prior, k, threads=threads),
                "state": _timed(baseline_state_retrieval, target, prior, k, pad_h),
            }
            for method in METHODS:
                result, wall_ms = runs[method]
                metrics = evaluate(result, gt)
                rows.append(AblationRow(
                    seed=seed,
                    k=k,
                    method=method,
                    precision_at_k=metrics.precision_at_k,
                    task_sparsity=metrics.task_sparsity,
                    relevant_share=metrics.relevant_share,
                    retrieved_timesteps=metrics.retrieved_timesteps,
                    wall_ms=round(wall_ms, 2),
                ))
            logger.info(
                f"seed={seed} k={k}: "
                + ", ".join(f"{r.method}={r.precision_at_k:.3f}" for r in rows[-len(METHODS):])
            )

    summary = []
    for k in ks:
        for method in METHODS:
            group = [r for r in rows if r.method == method and r.k == k]
            precisions = [r.precision_at_k for r in group]
            shares = [r.relevant_share for r in group if r.relevant_share is not None]
            summary.append(AblationSummary(
                method=method,
                k=k,
                mean_precision=statistics.mean(precisions),
                std_precision=statistics.stdev(precisions) if len(precisions) > 1 else 0.0,
                mean_task_sparsity=statistics.mean(r.task_sparsity for r in group),
                mean_relevant_share=statistics.mean(shares) if shares else None,
            ))
    return AblationReport(rows, summary)
