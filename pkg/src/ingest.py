"""エピソード取り込み - エピソードごとの .npz からデータセットを組み立てる

.npz のキー:
    embeddings*   H×E（カメラごとに1つ、例: embeddings_left, embeddings_wrist）
    proprio       H×P
    actions       H×A
    language      文字列（任意）
    frequency_hz  制御周波数（任意）

複数のカメラ埋め込みはタイムステップごとに平均して1本にまとめる。
"""

from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union
import logging
import zipfile

import numpy as np

from .dataset import Dataset, Trajectory, average_views
from .errors import CorruptBinary, DimMismatch, EmptyInput, SchemaViolation

logger = logging.getLogger(__name__)

VIEW_PREFIX = "embeddings"
DEFAULT_FREQUENCY_HZ = 15.0


def _view_keys(keys: Iterable[str]) -> List[str]:
    return sorted(k for k in keys if k.startswith(VIEW_PREFIX))


def load_episode(
    path: Union[str, Path], view_keys: Optional[Sequence[str]] = None
) -> Trajectory:
    """1エピソードを読み込む（IDはファイル名の拡張子を除いた部分）"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"ファイルが見つかりません: {path}")

    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (ValueError, OSError, zipfile.BadZipFile) as e:
        raise CorruptBinary(str(path), 0) from e

    keys = list(view_keys) if view_keys else _view_keys(arrays)
    if not keys:
        raise SchemaViolation(VIEW_PREFIX, f"({path.name} に埋め込みがありません)")
    for key in keys + ["proprio", "actions"]:
        if key not in arrays:
            raise SchemaViolation(key, f"({path.name})")

    embeddings = average_views([arrays[k] for k in keys])
    language = str(arrays["language"]) if "language" in arrays else ""
    frequency_hz = float(arrays["frequency_hz"]) if "frequency_hz" in arrays else DEFAULT_FREQUENCY_HZ

    return Trajectory(
        id=path.stem,
        embeddings=embeddings,
        proprio=np.asarray(arrays["proprio"], dtype=np.float32),
        actions=np.asarray(arrays["actions"], dtype=np.float32),
        language=language,
        frequency_hz=frequency_hz,
    )


def ingest_episodes(
    paths: Sequence[Union[str, Path]],
    name: str,
    role: str = "prior",
    view_keys: Optional[Sequence[str]] = None,
) -> Dataset:
    """エピソードファイル群を指定順のまま1つのデータセットにまとめる"""
    if not paths:
        raise EmptyInput("取り込むエピソードがありません")

    trajectories = []
    for i, path in enumerate(paths, 1):
        traj = load_episode(path, view_keys)
        logger.debug(f"[{i}/{len(paths)}] {traj.id}: H={traj.length}")
        trajectories.append(traj)

    dims = {t.embedding_dim for t in trajectories}
    if len(dims) != 1:
        raise DimMismatch(f"エピソード間で埋め込み次元が異なります: {sorted(dims)}")

    dataset = Dataset(name=name, embedding_dim=dims.pop(), trajectories=trajectories, role=role)
    logger.info(f"取り込み: {len(dataset)}エピソード, {dataset.total_timesteps}ステップ ({role})")
    return dataset
