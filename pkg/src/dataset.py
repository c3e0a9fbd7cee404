"""データセット管理 - manifest.json + 生float32バイナリによるデモ軌跡の永続化

ディレクトリ構成:
    manifest.json               データセット名・埋め込み次元・役割・軌跡一覧
    <id>/embeddings.f32         H×E (リトルエンディアン float32, 行優先, ヘッダなし)
    <id>/proprio.f32            H×P (先頭3列はエンドエフェクタ位置 [m])
    <id>/actions.f32            H×A (不透明なペイロード、解釈しない)
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Sequence, Tuple
import json
import logging

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .errors import (
    CorruptBinary,
    EmptyInput,
    IoFailure,
    MissingManifest,
    SchemaViolation,
    ShapeMismatch,
    ValidationFailed,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
FLOAT_DTYPE = np.dtype("<f4")
MATRIX_FILES = ("embeddings", "proprio", "actions")
ROLES = ("target", "prior", "retrieval")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """1本のデモンストレーション

    行列はすべてH行。読み込み後は読み取り専用の配列として共有される。
    """
    id: str
    embeddings: np.ndarray
    proprio: np.ndarray
    actions: np.ndarray
    language: str = ""
    frequency_hz: float = 15.0

    @property
    def length(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def embedding_dim(self) -> int:
        return int(self.embeddings.shape[1]) if self.embeddings.ndim == 2 else 0

    def slice(self, start: int, end: int, new_id: str) -> "Trajectory":
        """行 [start, end) をコピーした新しい軌跡"""
        return Trajectory(
            id=new_id,
            embeddings=self.embeddings[start:end].copy(),
            proprio=self.proprio[start:end].copy(),
            actions=self.actions[start:end].copy(),
            language=self.language,
            frequency_hz=self.frequency_hz,
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """D_target / D_prior / D_retrieval を表すデータセット"""
    name: str
    embedding_dim: int
    trajectories: Tuple[Trajectory, ...] = ()
    role: str = "prior"

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    def __len__(self) -> int:
        return len(self.trajectories)

    def get(self, trajectory_id: str) -> Trajectory:
        for traj in self.trajectories:
            if traj.id == trajectory_id:
                return traj
        raise KeyError(trajectory_id)

    @property
    def total_timesteps(self) -> int:
        return sum(t.length for t in self.trajectories)


@dataclass(frozen=True, order=True)
class SubTrajectoryRef:
    """軌跡の半開区間 [start, end)"""
    trajectory_id: str
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start

    def to_dict(self) -> dict:
        return {"traj": self.trajectory_id, "start": self.start, "end": self.end}

    @classmethod
    def from_dict(cls, data: dict) -> "SubTrajectoryRef":
        return cls(str(data["traj"]), int(data["start"]), int(data["end"]))


@dataclass(frozen=True)
class Issue:
    trajectory_id: str
    code: str
    message: str


@dataclass
class ValidationReport:
    issues: List[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    @property
    def codes(self) -> List[str]:
        return [i.code for i in self.issues]


class ManifestEntry(BaseModel):
    id: str
    length: int = Field(ge=1)
    proprio_dim: int = Field(ge=0)
    action_dim: int = Field(ge=0)
    language: str = ""
    frequency_hz: float = Field(gt=0)


class Manifest(BaseModel):
    name: str
    embedding_dim: int = Field(ge=1)
    role: Literal["target", "prior", "retrieval"]
    trajectories: List[ManifestEntry] = []


def is_valid_id(tid: str) -> bool:
    """ディレクトリ名としてそのまま使えるID（区切り文字や . .. を含まない）"""
    return bool(tid) and "/" not in tid and "\\" not in tid and tid not in (".", "..")


def validate_dataset(d: Dataset) -> ValidationReport:
    """不変条件の違反をすべて列挙（例外は投げない）"""
    report = ValidationReport()

    def add(traj_id: str, code: str, message: str) -> None:
        report.issues.append(Issue(traj_id, code, message))

    if d.embedding_dim < 1:
        add("", "BAD_EMBEDDING_DIM", f"embedding_dim={d.embedding_dim}")
    if d.role not in ROLES:
        add("", "BAD_ROLE", f"role={d.role}")

    # 検索結果のスライスは1ステップでもよい（セグメンテーション対象外）
    min_length = 1 if d.role == "retrieval" else 2

    seen = set()
    for traj in d.trajectories:
        tid = traj.id
        if not is_valid_id(tid):
            add(tid, "INVALID_ID", f"ディレクトリ名に使えないID: {tid!r}")
        if tid in seen:
            add(tid, "DUPLICATE_ID", f"IDが重複: {tid}")
        seen.add(tid)

        matrices = {name: getattr(traj, name) for name in MATRIX_FILES}
        if any(m.ndim != 2 for m in matrices.values()):
            add(tid, "BAD_SHAPE", "行列は2次元である必要があります")
            continue
        if any(m.dtype.kind != "f" or m.dtype.itemsize != 4 for m in matrices.values()):
            add(tid, "BAD_DTYPE", "行列はfloat32である必要があります")

        h = traj.length
        rows = {name: m.shape[0] for name, m in matrices.items()}
        if len(set(rows.values())) != 1:
            add(tid, "ROW_MISMATCH", f"行数が不一致: {rows}")
        if h < min_length:
            add(tid, "TOO_SHORT", f"H={h} < {min_length}")
        if traj.embedding_dim != d.embedding_dim:
            add(tid, "DIM_MISMATCH", f"E={traj.embedding_dim} != {d.embedding_dim}")
        if not all(np.isfinite(m).all() for m in matrices.values()):
            add(tid, "NON_FINITE", "NaNまたは無限大を含む")
        if not (traj.frequency_hz > 0 and np.isfinite(traj.frequency_hz)):
            add(tid, "BAD_FREQUENCY", f"frequency_hz={traj.frequency_hz}")

    return report


def _read_matrix(path: Path, traj_id: str, rows: int, cols: int) -> np.ndarray:
    if not path.exists():
        raise CorruptBinary(str(path), 0)
    blob = path.read_bytes()
    if len(blob) % FLOAT_DTYPE.itemsize:
        raise CorruptBinary(str(path), len(blob) - len(blob) % FLOAT_DTYPE.itemsize)
    expected = rows * cols * FLOAT_DTYPE.itemsize
    if len(blob) != expected:
        raise ShapeMismatch(traj_id, (rows, cols), len(blob) // FLOAT_DTYPE.itemsize)
    # frombufferは読み取り専用の配列を返す
    return np.frombuffer(blob, dtype=FLOAT_DTYPE).reshape(rows, cols)


def _schema_field(err: ValidationError) -> str:
    loc = err.errors()[0].get("loc", ()) if err.errors() else ()
    # ("trajectories", 3, "length") -> "length"
    names = [str(p) for p in loc if not isinstance(p, int)]
    return names[-1] if names else "manifest"


def load_dataset(path) -> Dataset:
    """データセットディレクトリを読み込み（manifest順を維持）"""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingManifest(f"manifest.jsonが見つかりません: {root}")

    try:
        manifest = Manifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise SchemaViolation(_schema_field(e), str(e.errors()[0].get("msg", ""))) from e

    ids = [entry.id for entry in manifest.trajectories]
    if len(set(ids)) != len(ids):
        raise SchemaViolation("id", "IDが重複しています")
    bad = [tid for tid in ids if not is_valid_id(tid)]
    if bad:
        raise SchemaViolation("id", f"ディレクトリ名に使えないID: {bad[0]!r}")

    trajectories = []
    for entry in manifest.trajectories:
        traj_dir = root / entry.id
        dims = {
            "embeddings": manifest.embedding_dim,
            "proprio": entry.proprio_dim,
            "actions": entry.action_dim,
        }
        mats = {
            name: _read_matrix(traj_dir / f"{name}.f32", entry.id, entry.length, dim)
            for name, dim in dims.items()
        }
        trajectories.append(Trajectory(
            id=entry.id,
            language=entry.language,
            frequency_hz=entry.frequency_hz,
            **mats,
        ))

    dataset = Dataset(
        name=manifest.name,
        embedding_dim=manifest.embedding_dim,
        trajectories=trajectories,
        role=manifest.role,
    )
    logger.info(f"読み込み: {dataset.name} ({dataset.role}) 軌跡{len(dataset)}本, {dataset.total_timesteps}ステップ")
    return dataset


def write_dataset(d: Dataset, path) -> None:
    """データセットを書き出し（load_datasetでビット単位に復元できる）"""
    report = validate_dataset(d)
    if not report.ok:
        raise ValidationFailed(report)

    root = Path(path)
    manifest = {
        "name": d.name,
        "embedding_dim": d.embedding_dim,
        "role": d.role,
        "trajectories": [
            {
                "id": t.id,
                "length": t.length,
                "proprio_dim": int(t.proprio.shape[1]),
                "action_dim": int(t.actions.shape[1]),
                "language": t.language,
                "frequency_hz": float(t.frequency_hz),
            }
            for t in d.trajectories
        ],
    }

    try:
        root.mkdir(parents=True, exist_ok=True)
        for t in d.trajectories:
            traj_dir = root / t.id
            traj_dir.mkdir(exist_ok=True)
            for name in MATRIX_FILES:
                matrix = np.ascontiguousarray(getattr(t, name), dtype=FLOAT_DTYPE)
                (traj_dir / f"{name}.f32").write_bytes(matrix.tobytes(order="C"))
        (root / MANIFEST_NAME).write_text(
            json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8"
        )
    except OSError as e:
        raise IoFailure(str(root), str(e)) from e

    logger.info(f"保存: {d.name} ({d.role}) 軌跡{len(d)}本 -> {root}")


def average_views(views: Sequence[np.ndarray]) -> np.ndarray:
    """複数カメラの埋め込みをタイムステップごとに平均"""
    if len(views) == 0:
        raise EmptyInput("平均するビューがありません")
    shape = np.shape(views[0])
    for v in views[1:]:
        if np.shape(v) != shape:
            raise ShapeMismatch(None, shape, np.shape(v))
    stacked = np.stack([np.asarray(v, dtype=np.float64) for v in views])
    return stacked.mean(axis=0).astype(np.float32)
