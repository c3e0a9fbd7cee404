"""セグメンテーション - 手先速度による遷移状態検出とチャンク分割

低速な「遷移状態」で軌跡を区切り、短すぎるチャンクは隣と結合する。
"""

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple
import logging

import numpy as np

from .dataset import Dataset, SubTrajectoryRef, Trajectory
from .errors import ConfigInvalid, TooFewProprioColumns, TooShort

logger = logging.getLogger(__name__)

MIN_CHUNK_LEN = 20  # これ未満のチャンクは隣と結合
DEFAULT_WINDOW = 30  # 固定長分割のチャンク長
SEGMENTERS = ("velocity", "window")
EPSILON_PERCENTILE = 10.0  # calibrate_epsilon の既定パーセンタイル


@dataclass(frozen=True)
class SegmentationConfig:
    """セグメンテーション設定

    epsilon: 速度しきい値 [m/step]
    min_len: チャンクの最小長
    method: "velocity"（遷移状態で分割）か "window"（固定長で分割、epsilonとmin_lenは使わない）
    window: 固定長分割のチャンク長
    """
    epsilon: float
    min_len: int = MIN_CHUNK_LEN
    method: str = "velocity"
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        if not (self.epsilon >= 0):
            raise ConfigInvalid(f"epsilonは0以上: {self.epsilon}")
        if self.min_len < 1:
            raise ConfigInvalid(f"min_lenは1以上: {self.min_len}")
        if self.method not in SEGMENTERS:
            raise ConfigInvalid(f"未知の分割方法: {self.method}")
        if self.window < 1:
            raise ConfigInvalid(f"windowは1以上: {self.window}")

    def describe(self) -> str:
        if self.method == "window":
            return f"window={self.window}"
        return f"epsilon={self.epsilon}, min_len={self.min_len}"


@dataclass(frozen=True)
class Segmentation:
    trajectory_id: str
    chunks: Tuple[SubTrajectoryRef, ...]

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "chunks": [[c.start, c.end] for c in self.chunks],
        }


def compute_speeds(proprio: np.ndarray) -> np.ndarray:
    """隣接ステップ間のエンドエフェクタ移動量（先頭3列のユークリッドノルム）"""
    proprio = np.asarray(proprio)
    if proprio.ndim != 2 or proprio.shape[0] < 2:
        raise TooShort(f"速度計算には2ステップ以上必要: shape={proprio.shape}")
    if proprio.shape[1] < 3:
        raise TooFewProprioColumns(f"proprioは3列以上必要: P={proprio.shape[1]}")
    position = proprio[:, :3].astype(np.float64)
    return np.linalg.norm(np.diff(position, axis=0), axis=1)


def find_transitions(speeds: np.ndarray, epsilon: float) -> np.ndarray:
    """遷移状態のマスク（長さH）

    t ∈ [1, H-1) で前後の速度がともに epsilon 未満なら遷移状態。
    境界 t=0, t=H-1 は常に False。
    """
    speeds = np.asarray(speeds)
    mask = np.zeros(len(speeds) + 1, dtype=bool)
    low = speeds < epsilon
    mask[1:-1] = low[:-1] & low[1:]
    return mask


def transition_runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """連続する遷移状態の区間 [first, last] の一覧"""
    runs = []
    start = None
    for t, flag in enumerate(mask):
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            runs.append((start, t - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def merge_short_chunks(
    chunks: Sequence[SubTrajectoryRef], min_len: int, H: int
) -> List[SubTrajectoryRef]:
    """min_len未満のチャンクを隣と結合

    最短のもの（同長なら左側）から、短い方の隣へ結合する。隣が同長なら右側。
    """
    spans = [(c.start, c.end) for c in chunks]
    if not spans:
        return []
    traj_id = chunks[0].trajectory_id

    while len(spans) > 1:
        short = [i for i, (s, e) in enumerate(spans) if e - s < min_len]
        if not short:
            break
        i = min(short, key=lambda idx: (spans[idx][1] - spans[idx][0], idx))

        if i == 0:
            j = 1
        elif i == len(spans) - 1:
            j = i - 1
        else:
            left = spans[i - 1][1] - spans[i - 1][0]
            right = spans[i + 1][1] - spans[i + 1][0]
            j = i - 1 if left < right else i + 1

        lo, hi = min(i, j), max(i, j)
        spans[lo:hi + 1] = [(spans[lo][0], spans[hi][1])]

    assert spans[0][0] == 0 and spans[-1][1] == H
    return [SubTrajectoryRef(traj_id, s, e) for s, e in spans]


def window_chunks(traj: Trajectory, window: int = DEFAULT_WINDOW) -> List[SubTrajectoryRef]:
    """長さwindowの連続チャンクに分割

    端数はひとつ前のチャンクに含める（最後のチャンクは window 以上 2*window 未満）。
    H < window なら軌跡全体が1チャンク。
    """
    if window < 1:
        raise ConfigInvalid(f"windowは1以上: {window}")
    H = traj.length
    if H < 1:
        raise TooShort(f"{traj.id}: 空の軌跡は分割できません")
    bounds = list(range(0, H, window)) + [H]
    chunks = [SubTrajectoryRef(traj.id, s, e) for s, e in zip(bounds[:-1], bounds[1:])]
    return merge_short_chunks(chunks, window, H)


def segment_trajectory(traj: Trajectory, cfg: SegmentationConfig) -> Segmentation:
    """軌跡を遷移状態の中点で分割し、短いチャンクを結合（window指定なら固定長で分割）"""
    if traj.length < 2:
        raise TooShort(f"{traj.id}: H={traj.length} は分割できません")
    if cfg.method == "window":
        chunks = window_chunks(traj, cfg.window)
        logger.debug(f"{traj.id}: 固定長{cfg.window} -> チャンク{len(chunks)}個")
        return Segmentation(traj.id, tuple(chunks))

    speeds = compute_speeds(traj.proprio)
    runs = transition_runs(find_transitions(speeds, cfg.epsilon))
    cuts = [(first + last) // 2 for first, last in runs]

    bounds = [0] + cuts + [traj.length]
    chunks = [
        SubTrajectoryRef(traj.id, s, e)
        for s, e in zip(bounds[:-1], bounds[1:])
    ]
    merged = merge_short_chunks(chunks, cfg.min_len, traj.length)

    logger.debug(f"{traj.id}: 遷移{len(runs)}箇所 -> チャンク{len(merged)}個")
    return Segmentation(traj.id, tuple(merged))


def segment_dataset(dataset: Dataset, cfg: SegmentationConfig) -> List[Segmentation]:
    """データセット全体を分割（manifest順）"""
    segs = [segment_trajectory(t, cfg) for t in dataset.trajectories]
    total = sum(len(s.chunks) for s in segs)
    logger.info(f"セグメンテーション: 軌跡{len(segs)}本 -> チャンク{total}個 ({cfg.describe()})")
    return segs


def segmentations_to_json(segs: Iterable[Segmentation]) -> List[dict]:
    return [s.to_dict() for s in segs]


def calibrate_epsilon(
    trajectories: Iterable[Trajectory], percentile: float = EPSILON_PERCENTILE
) -> float:
    """観測された速度のパーセンタイルからepsilonを決める

    既定は全速度の10パーセンタイル。
    """
    speeds = [compute_speeds(t.proprio) for t in trajectories]
    if not speeds:
        raise ConfigInvalid("epsilonの較正には軌跡が必要です")
    epsilon = float(np.percentile(np.concatenate(speeds), percentile))
    logger.info(f"epsilon較正: {percentile}パーセンタイル -> {epsilon:.6g}")
    return epsilon
