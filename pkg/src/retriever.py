"""部分軌跡検索 - セグメント化したクエリをS-DTWで事前データセットと照合

1. ターゲット軌跡をチャンクに分割
2. 各チャンク × 各事前軌跡でコスト行列を作りS-DTW
3. クエリ間で均等にtop-Kを選択
4. 選ばれた区間とターゲット軌跡をデータセットとして書き出し
"""

from collections import Counter
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import json
import logging
import os

import psutil
from tqdm import tqdm

from .dataset import Dataset, SubTrajectoryRef, write_dataset
from .dtw import DistanceMetric, Match, WarpPath, cost_matrix, sdtw
from .errors import ConfigInvalid, DimMismatch, EmptyPrior, EmptyTarget, StaleResult
from .segmentation import SegmentationConfig, segment_dataset

logger = logging.getLogger(__name__)

DEFAULT_K = 100  # 取得するセグメント数


def default_threads() -> int:
    """物理コア数（取得できなければ論理CPU数）"""
    return psutil.cpu_count(logical=False) or os.cpu_count() or 1


@dataclass(frozen=True)
class RetrievalConfig:
    """検索設定"""
    segmentation: SegmentationConfig
    k: int = DEFAULT_K
    metric: DistanceMetric = DistanceMetric.L2
    dedupe: bool = False  # Falseなら重複マッチを許す（重要なチャンクの重み付け）
    threads: int = field(default_factory=default_threads)
    progress: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigInvalid(f"kは1以上: {self.k}")
        if self.threads < 1:
            raise ConfigInvalid(f"threadsは1以上: {self.threads}")
        object.__setattr__(self, "metric", DistanceMetric(self.metric))

    def echo(self) -> dict:
        # スレッド数は結果に影響しないので含めない
        seg = self.segmentation
        if seg.method == "window":
            seg_echo = {"segmenter": "window", "window": seg.window}
        else:
            seg_echo = {"epsilon": seg.epsilon, "min_len": seg.min_len}
        return {
            "k": self.k,
            "metric": self.metric.value,
            **seg_echo,
            "dedupe": self.dedupe,
        }


@dataclass
class MatchTable:
    """クエリごとの候補（コスト昇順、同値は軌跡ID・開始位置順）"""
    queries: List[SubTrajectoryRef]
    candidates: Dict[SubTrajectoryRef, List[Match]]

    def __len__(self) -> int:
        return len(self.queries)

    @property
    def total_candidates(self) -> int:
        return sum(len(c) for c in self.candidates.values())


@dataclass
class RetrievalResult:
    selected: List[Match]
    per_query_counts: Dict[SubTrajectoryRef, int]
    config: dict = field(default_factory=dict)
    exhausted: bool = False

    def __len__(self) -> int:
        return len(self.selected)

    @property
    def languages(self) -> List[str]:
        return [m.language for m in self.selected]

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "matches": [
                {
                    "query": m.query.to_dict(),
                    "prior": m.prior_ref.to_dict(),
                    "cost": m.cost,
                    "language": m.language,
                }
                for m in self.selected
            ],
            "per_query_counts": [
                {"query": q.to_dict(), "count": c}
                for q, c in self.per_query_counts.items()
            ],
            "exhausted": self.exhausted,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, indent=2)

    @classmethod
    def from_json(cls, data: dict) -> "RetrievalResult":
        """保存済みJSONから復元（ワーピングパスは保存しないので空）"""
        selected = []
        for item in data.get("matches", []):
            prior = SubTrajectoryRef.from_dict(item["prior"])
            selected.append(Match(
                trajectory_id=prior.trajectory_id,
                start=prior.start,
                end=prior.end,
                cost=float(item["cost"]),
                path=WarpPath(()),
                query=SubTrajectoryRef.from_dict(item["query"]),
                language=item.get("language", ""),
            ))
        counts = {
            SubTrajectoryRef.from_dict(entry["query"]): int(entry["count"])
            for entry in data.get("per_query_counts", [])
        }
        return cls(selected, counts, data.get("config", {}), bool(data.get("exhausted", False)))


def _match_pair(query: SubTrajectoryRef, q_embeddings, prior_traj, metric: DistanceMetric) -> Match:
    C = cost_matrix(q_embeddings, prior_traj.embeddings, metric)
    alignment = sdtw(C)
    return Match(
        trajectory_id=prior_traj.id,
        start=alignment.start,
        end=alignment.end,
        cost=alignment.cost,
        path=alignment.path,
        query=query,
        language=prior_traj.language,
    )


def _check_inputs(targets: Dataset, prior: Dataset) -> None:
    if len(prior) == 0:
        raise EmptyPrior(f"事前データセットが空です: {prior.name}")
    if len(targets) == 0:
        raise EmptyTarget(f"ターゲットデータセットが空です: {targets.name}")
    if targets.embedding_dim != prior.embedding_dim:
        raise DimMismatch(
            f"埋め込み次元が不一致: target={targets.embedding_dim}, prior={prior.embedding_dim}"
        )


def match_queries(
    queries: Sequence[SubTrajectoryRef],
    targets: Dataset,
    prior: Dataset,
    metric: DistanceMetric = DistanceMetric.L2,
    threads: Optional[int] = None,
    progress: bool = False,
) -> MatchTable:
    """任意のクエリ集合を全事前軌跡と照合

    (クエリ, 事前軌跡) の組ごとに独立なので並列に計算し、最後に決定的にソートする。
    """
    _check_inputs(targets, prior)
    metric = DistanceMetric(metric)
    sources = {t.id: t for t in targets.trajectories}
    candidates: Dict[SubTrajectoryRef, List[Match]] = {q: [] for q in queries}

    with ThreadPoolExecutor(max_workers=threads or default_threads()) as executor:
        futures = []
        for query in queries:
            # チャンクの埋め込みは保存済み行列のビュー
            q_embeddings = sources[query.trajectory_id].embeddings[query.start:query.end]
            for prior_traj in prior.trajectories:
                futures.append(executor.submit(_match_pair, query, q_embeddings, prior_traj, metric))

        for future in tqdm(as_completed(futures), total=len(futures), desc="S-DTW", disable=not progress):
            match = future.result()
            candidates[match.query].append(match)

    for matches in candidates.values():
        matches.sort(key=lambda m: (m.cost, m.trajectory_id, m.start))

    logger.info(f"照合: クエリ{len(queries)}個 × 事前軌跡{len(prior)}本 = {len(futures)}組")
    return MatchTable(list(queries), candidates)


def match_all(targets: Dataset, prior: Dataset, cfg: RetrievalConfig) -> MatchTable:
    """ターゲットを分割し、全チャンクを全事前軌跡とS-DTWで照合"""
    _check_inputs(targets, prior)
    segs = segment_dataset(targets, cfg.segmentation)
    queries = [chunk for seg in segs for chunk in seg.chunks]
    return match_queries(queries, targets, prior, cfg.metric, cfg.threads, cfg.progress)


def select_top_k(table: MatchTable, k: int, dedupe: bool = False, config: Optional[dict] = None) -> RetrievalResult:
    """クエリ間で均等にコストの低いマッチを選ぶ

    ラウンドごとに各クエリの次の候補を1つずつ取る。最終ラウンドでKを超える場合は
    次候補のコストが低いクエリから順に取る。
    """
    cursor = {q: 0 for q in table.queries}
    counts = {q: 0 for q in table.queries}
    taken_keys = set()
    selected: List[Match] = []

    def peek(query: SubTrajectoryRef) -> Optional[Match]:
        cands = table.candidates[query]
        while cursor[query] < len(cands):
            cand = cands[cursor[query]]
            if not (dedupe and (cand.trajectory_id, cand.start, cand.end) in taken_keys):
                return cand
            cursor[query] += 1
        return None

    def take(query: SubTrajectoryRef, match: Match) -> None:
        selected.append(match)
        counts[query] += 1
        cursor[query] += 1
        taken_keys.add((match.trajectory_id, match.start, match.end))

    exhausted = False
    while len(selected) < k:
        active = [(pos, q, c) for pos, q in enumerate(table.queries) if (c := peek(q)) is not None]
        if not active:
            exhausted = True
            break

        remaining = k - len(selected)
        if len(active) > remaining:
            active.sort(key=lambda item: (item[2].cost, item[0]))

        for _, query, _ in active:
            if len(selected) >= k:
                break
            match = peek(query)
            if match is not None:
                take(query, match)

    if exhausted:
        logger.warning(f"候補が不足: K={k} に対して {len(selected)}件のみ")

    return RetrievalResult(
        selected=selected,
        per_query_counts=counts,
        config=dict(config or {"k": k, "dedupe": dedupe}),
        exhausted=exhausted,
    )


def retrieve(targets: Dataset, prior: Dataset, cfg: RetrievalConfig) -> RetrievalResult:
    """分割・照合・top-K選択をまとめて実行"""
    table = match_all(targets, prior, cfg)
    result = select_top_k(table, cfg.k, cfg.dedupe, cfg.echo())
    logger.info(f"検索完了: {len(result)}件 (クエリ{len(table)}個, 候補{table.total_candidates}件)")
    return result


def _resolve(result: RetrievalResult, targets: Dataset, prior: Dataset) -> None:
    target_ids = {t.id for t in targets.trajectories}
    lengths = {t.id: t.length for t in prior.trajectories}
    for m in result.selected:
        if m.trajectory_id not in lengths:
            raise StaleResult(f"事前軌跡が見つかりません: {m.trajectory_id}")
        if not (0 <= m.start < m.end <= lengths[m.trajectory_id]):
            raise StaleResult(f"区間が範囲外: {m.trajectory_id}[{m.start}:{m.end})")
        if m.query.trajectory_id not in target_ids:
            raise StaleResult(f"ターゲット軌跡が見つかりません: {m.query.trajectory_id}")


def export_retrieval(result: RetrievalResult, targets: Dataset, prior: Dataset, out_path) -> Dataset:
    """D_retrieval のスライスとD_targetのコピーを1つのデータセットに書き出す

    同じ区間が複数回選ばれた場合は dup_index を変えて別エントリにする。
    """
    _resolve(result, targets, prior)
    prior_index = {t.id: t for t in prior.trajectories}
    dup_counter: Counter = Counter()

    trajectories = []
    for m in result.selected:
        key: Tuple[str, int, int] = (m.trajectory_id, m.start, m.end)
        dup_index = dup_counter[key]
        dup_counter[key] += 1
        new_id = f"{m.trajectory_id}#{m.start}-{m.end}#{dup_index}"
        trajectories.append(prior_index[m.trajectory_id].slice(m.start, m.end, new_id))
    trajectories.extend(targets.trajectories)

    exported = Dataset(
        name=f"{targets.name}+retrieval",
        embedding_dim=prior.embedding_dim,
        trajectories=trajectories,
        role="retrieval",
    )
    write_dataset(exported, out_path)
    logger.info(f"エクスポート: 検索{len(result.selected)}本 + ターゲット{len(targets)}本 -> {out_path}")
    return exported
