"""ランタイムベンチマーク - 事前データセットの規模に対する検索時間のスケーリング

照合は (クエリ数 × 事前軌跡数) 組のS-DTWなので、クエリを固定すれば時間は事前軌跡数に線形。
各規模でウォームアップ1回の後、trials回計測して平均と標準偏差を記録し、直線をフィットする。
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import csv
import json
import logging
import statistics
import time

import numpy as np

from .dataset import Dataset, Trajectory
from .errors import ConfigInvalid
from .retriever import DEFAULT_K, RetrievalConfig, default_threads, retrieve
from .segmentation import SegmentationConfig

logger = logging.getLogger(__name__)

DEFAULT_TRAJ_LEN = 250
DEFAULT_SIZES = (100, 200, 400, 800)
MIN_TRIALS = 3
DEFAULT_TRIALS = 10
BENCH_EPSILON = 1e-3
MOVING_SPEED = 0.01  # 静止区間以外の1ステップ移動量 [m]
POOL_SIZE = 16  # 事前軌跡はこの数の埋め込みを使い回す（計算量は内容に依存しない）


@dataclass(frozen=True)
class BenchWorkload:
    """ターゲット側の負荷: n_queries個のチャンク（各query_len）、埋め込み次元"""
    n_queries: int = 5
    query_len: int = 50
    embedding_dim: int = 768

    def __post_init__(self):
        if self.n_queries < 1 or self.query_len < 2 or self.embedding_dim < 1:
            raise ConfigInvalid(f"BenchWorkloadが不正: {self}")


@dataclass
class BenchRow:
    prior_size: int
    total_prior_timesteps: int
    wall_ms_mean: float
    wall_ms_std: float
    trials: int


@dataclass
class BenchFit:
    slope: float
    intercept: float
    r2: float


@dataclass
class BenchReport:
    rows: List[BenchRow]
    fit: BenchFit
    workload: Dict = field(default_factory=dict)

    def ratio(self, small: int, large: int) -> float:
        """2つの規模の平均時間の比"""
        times = {r.prior_size: r.wall_ms_mean for r in self.rows}
        return times[large] / times[small]

    def to_json(self) -> dict:
        return {
            "workload": self.workload,
            "rows": [asdict(r) for r in self.rows],
            "fit": asdict(self.fit),
        }

    def write(self, out_path) -> Tuple[Path, Path]:
        """JSONと行ごとのCSVを書き出す"""
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        json_path = out.with_suffix(".json")
        json_path.write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")
        csv_path = out.with_suffix(".csv")
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(asdict(self.rows[0]).keys()))
            writer.writeheader()
            writer.writerows(asdict(r) for r in self.rows)
        logger.info(f"ベンチマーク保存: {json_path}, {csv_path}")
        return json_path, csv_path


def _target_proprio(workload: BenchWorkload) -> np.ndarray:
    """各チャンク境界 c で speed[c-1] = speed[c] = 0 となる位置列"""
    H = workload.n_queries * workload.query_len
    steps = np.full(H - 1, MOVING_SPEED)
    for c in range(workload.query_len, H, workload.query_len):
        steps[c - 1] = 0.0
        steps[c] = 0.0
    x = np.concatenate([[0.0], np.cumsum(steps)])
    proprio = np.zeros((H, 3), dtype=np.float32)
    proprio[:, 0] = x
    return proprio


def _random_trajectory(traj_id: str, H: int, E: int, rng: np.random.Generator, proprio=None) -> Trajectory:
    if proprio is None:
        proprio = np.zeros((H, 3), dtype=np.float32)
        proprio[:, 0] = np.arange(H) * MOVING_SPEED
    return Trajectory(
        id=traj_id,
        embeddings=rng.standard_normal((H, E)).astype(np.float32),
        proprio=proprio,
        actions=np.zeros((H, 1), dtype=np.float32),
        language=f"bench {traj_id}",
    )


def make_benchmark_data(
    n_prior: int,
    traj_len: int = DEFAULT_TRAJ_LEN,
    workload: BenchWorkload = BenchWorkload(),
    seed: int = 0,
) -> Tuple[Dataset, Dataset]:
    """(ターゲット1本, 事前軌跡n_prior本) を生成"""
    rng = np.random.default_rng(seed)
    E = workload.embedding_dim
    H = workload.n_queries * workload.query_len
    target = Dataset(
        name=f"bench-target-{seed}",
        embedding_dim=E,
        trajectories=[_random_trajectory("target", H, E, rng, _target_proprio(workload))],
        role="target",
    )
    pool = [_random_trajectory(f"pool{i}", traj_len, E, rng) for i in range(min(POOL_SIZE, n_prior))]
    prior_trajs = []
    for i in range(n_prior):
        src = pool[i % len(pool)]
        prior_trajs.append(Trajectory(
            id=f"p{i:06d}",
            embeddings=src.embeddings,
            proprio=src.proprio,
            actions=src.actions,
            language=src.language,
        ))
    prior = Dataset(name=f"bench-prior-{n_prior}", embedding_dim=E, trajectories=prior_trajs, role="prior")
    return target, prior


def _bench_config(workload: BenchWorkload, k: int, threads: int) -> RetrievalConfig:
    # min_len = query_len なので、ターゲットはちょうどn_queries個に分割される
    return RetrievalConfig(
        segmentation=SegmentationConfig(epsilon=BENCH_EPSILON, min_len=workload.query_len),
        k=k,
        threads=threads,
    )


def _fit_line(xs: Sequence[float], ys: Sequence[float]) -> BenchFit:
    slope, intercept = np.polyfit(xs, ys, 1)
    predicted = slope * np.asarray(xs) + intercept
    ss_res = float(np.sum((np.asarray(ys) - predicted) ** 2))
    ss_tot = float(np.sum((np.asarray(ys) - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return BenchFit(float(slope), float(intercept), r2)


def run_benchmark(
    sizes: Sequence[int] = DEFAULT_SIZES,
    traj_len: int = DEFAULT_TRAJ_LEN,
    workload: BenchWorkload = BenchWorkload(),
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    threads: Optional[int] = None,
    k: int = DEFAULT_K,
) -> BenchReport:
    """規模ごとにmatch_all + select_top_kの壁時計時間を計測"""
    sizes = list(sizes)
    if trials < MIN_TRIALS:
        raise ConfigInvalid(f"trialsは{MIN_TRIALS}以上: {trials}")
    if len(sizes) < 2:
        raise ConfigInvalid(f"規模は2つ以上必要: {sizes}")
    if any(m < 1 for m in sizes):
        raise ConfigInvalid(f"規模は1以上: {sizes}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigInvalid(f"規模は狭義単調増加: {sizes}")
    if traj_len < 2:
        raise ConfigInvalid(f"traj_lenは2以上: {traj_len}")

    cfg = _bench_config(workload, k, threads or default_threads())
    rows = []
    for m in sizes:
        target, prior = make_benchmark_data(m, traj_len, workload, seed)
        retrieve(target, prior, cfg)  # ウォームアップ（JITコンパイル含む）

        times = []
        for _ in range(trials):
            start = time.perf_counter()
            retrieve(target, prior, cfg)
            times.append((time.perf_counter() - start) * 1000)

        row = BenchRow(
            prior_size=m,
            total_prior_timesteps=prior.total_timesteps,
            wall_ms_mean=round(statistics.mean(times), 3),
            wall_ms_std=round(statistics.stdev(times), 3),
            trials=trials,
        )
        rows.append(row)
        logger.info(f"M={m}: {row.wall_ms_mean:.1f}ms ± {row.wall_ms_std:.1f}ms")

    fit = _fit_line([r.prior_size for r in rows], [r.wall_ms_mean for r in rows])
    logger.info(f"線形フィット: slope={fit.slope:.4f}ms/traj, R²={fit.r2:.4f}")
    workload_echo = {**asdict(workload), "traj_len": traj_len, "k": k, "threads": cfg.threads, "seed": seed}
    return BenchReport(rows, fit, workload_echo)


@dataclass
class ThreadSweepRow:
    threads: int
    wall_ms: float


@dataclass
class ThreadSweepReport:
    rows: List[ThreadSweepRow]
    identical: bool
    monotone: bool

    def to_json(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "identical": self.identical, "monotone": self.monotone}


def thread_sweep(
    thread_counts: Sequence[int],
    n_prior: int = 100,
    seeds: Sequence[int] = (0, 1, 2),
    traj_len: int = DEFAULT_TRAJ_LEN,
    workload: BenchWorkload = BenchWorkload(),
    k: int = DEFAULT_K,
) -> ThreadSweepReport:
    """ワーカー数ごとに結果JSONの同一性と時間を確認

    時間がワーカー数に対して非増加でなければ警告のみ（ノイズの多い環境を考慮）。
    """
    if not thread_counts or any(t < 1 for t in thread_counts):
        raise ConfigInvalid(f"スレッド数は1以上: {list(thread_counts)}")

    data = [make_benchmark_data(n_prior, traj_len, workload, seed) for seed in seeds]
    outputs: Dict[int, List[str]] = {}
    rows = []
    for threads in thread_counts:
        cfg = _bench_config(workload, k, threads)
        retrieve(*data[0], cfg)
        start = time.perf_counter()
        outputs[threads] = [retrieve(target, prior, cfg).dumps() for target, prior in data]
        rows.append(ThreadSweepRow(threads, round((time.perf_counter() - start) * 1000, 3)))

    reference = outputs[thread_counts[0]]
    identical = all(out == reference for out in outputs.values())
    if not identical:
        logger.error("ワーカー数によって検索結果が異なります")

    ordered = sorted(rows, key=lambda r: r.threads)
    monotone = all(b.wall_ms <= a.wall_ms for a, b in zip(ordered, ordered[1:]))
    if not monotone:
        logger.warning(
            "ワーカー数を増やしても時間が減っていません: "
            + ", ".join(f"{r.threads}={r.wall_ms:.0f}ms" for r in ordered)
        )
    return ThreadSweepReport(rows, identical, monotone)
