"""比較用の検索ベースライン

- D-T: ターゲット軌跡全体を1クエリとしてS-DTW検索
- D-S: 単一状態のコサイン類似度検索（FAISS内積インデックス）+ 前後パディング
"""

from collections import Counter
from typing import Dict, List, Optional, Tuple
import logging

import faiss
import numpy as np

from .dataset import Dataset, SubTrajectoryRef
from .dtw import DistanceMetric, Match, WarpPath
from .errors import ConfigInvalid, DimMismatch, EmptyPrior, EmptyTarget
from .retriever import RetrievalResult, match_queries, select_top_k

logger = logging.getLogger(__name__)

DEFAULT_PAD_H = 10  # 単一状態の前後に付けるステップ数


def baseline_full_trajectory(
    targets: Dataset,
    prior: Dataset,
    k: int,
    metric: DistanceMetric = DistanceMetric.L2,
    threads: Optional[int] = None,
    dedupe: bool = False,
) -> RetrievalResult:
    """分割せずにターゲット軌跡全体 [0, H) をクエリにする"""
    if k < 1:
        raise ConfigInvalid(f"kは1以上: {k}")
    metric = DistanceMetric(metric)
    queries = [SubTrajectoryRef(t.id, 0, t.length) for t in targets.trajectories]
    table = match_queries(queries, targets, prior, metric, threads)
    config = {"method": "full_trajectory", "k": k, "metric": metric.value, "dedupe": dedupe}
    result = select_top_k(table, k, dedupe, config)
    logger.info(f"D-T検索完了: {len(result)}件 (クエリ{len(queries)}個)")
    return result


def _normalize(vectors: np.ndarray) -> np.ndarray:
    """L2正規化（コサイン類似度のため）"""
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms = np.maximum(norms, np.finfo(vectors.dtype).tiny)
    return vectors / norms


def _frame_index(dataset: Dataset) -> Tuple[np.ndarray, List[Tuple[str, int]]]:
    """全フレームを連結した埋め込みと (軌跡ID, t) の対応表"""
    owners = [(t.id, step) for t in dataset.trajectories for step in range(t.length)]
    frames = np.concatenate([t.embeddings for t in dataset.trajectories]).astype(np.float64)
    return frames, owners


def baseline_state_retrieval(
    targets: Dataset,
    prior: Dataset,
    k: int,
    pad_h: int = DEFAULT_PAD_H,
) -> RetrievalResult:
    """単一状態のコサイン距離で事前フレームを順位付けし、[t-pad_h, t+pad_h) に広げる

    事前フレームごとのコストは全ターゲットフレームに対する最小の (1 - cos)。
    FAISSで候補を絞り、選ばれた組のコストはfloat64で計算し直す。
    """
    if k < 1:
        raise ConfigInvalid(f"kは1以上: {k}")
    if pad_h < 1:
        raise ConfigInvalid(f"pad_hは1以上: {pad_h}")
    if len(prior) == 0:
        raise EmptyPrior(f"事前データセットが空です: {prior.name}")
    if len(targets) == 0:
        raise EmptyTarget(f"ターゲットデータセットが空です: {targets.name}")
    if targets.embedding_dim != prior.embedding_dim:
        raise DimMismatch(
            f"埋め込み次元が不一致: target={targets.embedding_dim}, prior={prior.embedding_dim}"
        )

    prior_frames, prior_owners = _frame_index(prior)
    target_frames, target_owners = _frame_index(targets)
    prior_unit = _normalize(prior_frames)
    target_unit = _normalize(target_frames)

    index = faiss.IndexFlatIP(prior.embedding_dim)
    index.add(np.ascontiguousarray(prior_unit, dtype=np.float32))
    top = min(k, index.ntotal)
    _, neighbors = index.search(np.ascontiguousarray(target_unit, dtype=np.float32), top)

    # 事前フレームごとに最も近いターゲットフレームを残す
    best: Dict[int, Tuple[float, int]] = {}
    for q, row in enumerate(neighbors):
        row = row[row >= 0]
        sims = prior_unit[row] @ target_unit[q]
        costs = np.clip(1.0 - sims, 0.0, 2.0)
        for p, cost in zip(row.tolist(), costs.tolist()):
            if p not in best or cost < best[p][0]:
                best[p] = (cost, q)

    ranked = sorted(best.items(), key=lambda item: (item[1][0], item[0]))[:k]

    lengths = {t.id: t.length for t in prior.trajectories}
    languages = {t.id: t.language for t in prior.trajectories}
    selected: List[Match] = []
    counts: Counter = Counter()
    for p, (cost, q) in ranked:
        traj_id, step = prior_owners[p]
        target_id, target_step = target_owners[q]
        query = SubTrajectoryRef(target_id, target_step, target_step + 1)
        selected.append(Match(
            trajectory_id=traj_id,
            start=max(0, step - pad_h),
            end=min(lengths[traj_id], step + pad_h),
            cost=float(cost),
            path=WarpPath(((0, step),)),
            query=query,
            language=languages[traj_id],
        ))
        counts[query] += 1

    exhausted = len(selected) < k
    if exhausted:
        logger.warning(f"候補が不足: K={k} に対して {len(selected)}件のみ")
    logger.info(f"D-S検索完了: {len(selected)}件 (事前フレーム{index.ntotal}個, pad_h={pad_h})")
    return RetrievalResult(
        selected=selected,
        per_query_counts=dict(counts),
        config={"method": "state", "k": k, "metric": DistanceMetric.ONE_MINUS_COSINE.value, "pad_h": pad_h},
        exhausted=exhausted,
    )
