"""合成データ生成 - 既知のスキルを埋め込んだマルチタスクデータセット

各スキルは埋め込み空間上の区分線形曲線。軌跡はタスクのスキルを連結したもので、
インスタンスごとに速度の揺らぎ（時間伸縮）とガウスノイズを加える。
スキルの境目では手先位置を数ステップ静止させ、セグメンテーションが境界を見つけられるようにする。
どのスキル曲線も共通の静止姿勢の埋め込みから始まり、そこへ戻る。
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Set, Tuple
import json
import logging

import numpy as np

from .dataset import Dataset, Trajectory, average_views, write_dataset
from .errors import ConfigInvalid

logger = logging.getLogger(__name__)

SKILL_REACH_M = 0.5  # 1スキルあたりの手先移動距離
GROUND_TRUTH_NAME = "ground_truth.json"
TARGET_TASK = "target"


@dataclass(frozen=True)
class SynthConfig:
    """合成データ設定"""
    n_skills: int = 8
    skill_len_range: Tuple[int, int] = (30, 50)
    tasks: int = 12
    skills_per_task: int = 2
    trajectories_per_task: int = 5
    embedding_dim: int = 16
    warp_jitter: float = 0.2
    noise_sigma: float = 0.05
    seed: int = 0
    n_views: int = 1
    pause_len: int = 2
    anchors_per_skill: int = 4
    frequency_hz: float = 15.0

    def __post_init__(self):
        lo, hi = self.skill_len_range
        checks = [
            (self.skills_per_task >= 1, "skills_per_task >= 1"),
            (self.n_skills >= self.skills_per_task, "n_skills >= skills_per_task"),
            (2 <= lo <= hi, "2 <= skill_len_range[0] <= skill_len_range[1]"),
            (self.tasks >= 1, "tasks >= 1"),
            (self.trajectories_per_task >= 1, "trajectories_per_task >= 1"),
            (self.embedding_dim >= 1, "embedding_dim >= 1"),
            (0 <= self.warp_jitter < 1, "0 <= warp_jitter < 1"),
            (self.noise_sigma >= 0, "noise_sigma >= 0"),
            (self.n_views >= 1, "n_views >= 1"),
            (self.pause_len >= 0, "pause_len >= 0"),
            (self.anchors_per_skill >= 3, "anchors_per_skill >= 3"),
            (self.frequency_hz > 0, "frequency_hz > 0"),
        ]
        # 目標スキル以外で他のスキル枠を埋められること
        if self.skills_per_task >= 2:
            checks.append((
                self.n_skills - self.skills_per_task >= self.skills_per_task - 1,
                "n_skills - skills_per_task >= skills_per_task - 1",
            ))
        for ok, rule in checks:
            if not ok:
                raise ConfigInvalid(f"SynthConfigが不正: {rule}")

    @property
    def recommended_epsilon(self) -> float:
        """静止区間だけを遷移状態とみなすepsilon

        移動中の1ステップ移動量の下限の半分。静止区間の速度は厳密に0。
        """
        j = self.warp_jitter
        longest = int(round(self.skill_len_range[1] * (1 + j)))
        min_step = SKILL_REACH_M * (1 - j) / ((longest - 1) * (1 + j))
        return 0.5 * min_step


@dataclass
class GroundTruth:
    labels: Dict[str, List[int]]
    tasks: Dict[str, List[int]]
    trajectory_tasks: Dict[str, str] = field(default_factory=dict)
    target_task: str = TARGET_TASK

    def relevant_tasks(self) -> Set[str]:
        """目標タスクとスキルを1つ以上共有する事前タスク"""
        target = set(self.tasks.get(self.target_task, []))
        return {
            task for task, skills in self.tasks.items()
            if task != self.target_task and target & set(skills)
        }

    def to_json(self) -> dict:
        return {
            "labels": self.labels,
            "tasks": self.tasks,
            "trajectory_tasks": self.trajectory_tasks,
            "target_task": self.target_task,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            labels={k: [int(s) for s in v] for k, v in data["labels"].items()},
            tasks={k: [int(s) for s in v] for k, v in data["tasks"].items()},
            trajectory_tasks=data.get("trajectory_tasks", {}),
            target_task=data.get("target_task", TARGET_TASK),
        )


class SkillLibrary:
    """スキルごとのアンカー曲線と手先移動方向

    両端のアンカーは全スキル共通の静止姿勢。中間のアンカーがスキルを特徴づける。
    """

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        rest = rng.standard_normal(cfg.embedding_dim)
        self.anchors = rng.standard_normal((cfg.n_skills, cfg.anchors_per_skill, cfg.embedding_dim))
        self.anchors[:, 0] = rest
        self.anchors[:, -1] = rest
        directions = rng.standard_normal((cfg.n_skills, 3))
        self.directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
        lo, hi = cfg.skill_len_range
        self.lengths = rng.integers(lo, hi + 1, size=cfg.n_skills)
        self._knots = np.linspace(0.0, 1.0, cfg.anchors_per_skill)

    def render(self, skill: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """1インスタンス分の (位相, ノイズなし埋め込み) を生成"""
        jitter = self.cfg.warp_jitter
        length = max(2, int(round(self.lengths[skill] * (1 + jitter * rng.uniform(-1, 1)))))
        increments = 1 + jitter * rng.uniform(-1, 1, size=length - 1)
        phase = np.concatenate([[0.0], np.cumsum(increments)])
        phase /= phase[-1]
        curve = np.stack(
            [np.interp(phase, self._knots, self.anchors[skill, :, e]) for e in range(self.cfg.embedding_dim)],
            axis=1,
        )
        return phase, curve


def _compose_tasks(cfg: SynthConfig, rng: np.random.Generator) -> Tuple[List[int], List[List[int]]]:
    """目標タスクと事前タスクのスキル構成

    目標スキルはそれぞれ2つ以上の事前タスクに現れる。
    どの事前タスクも目標スキルを全部は含まない（skills_per_task >= 2 のとき）。
    """
    spt = cfg.skills_per_task
    target = [int(s) for s in rng.choice(cfg.n_skills, spt, replace=False)]
    others = [s for s in range(cfg.n_skills) if s not in target]

    compositions: List[List[int]] = []
    for _ in range(2):
        for skill in target:
            if len(compositions) >= cfg.tasks:
                break
            fill = [int(s) for s in rng.choice(others, spt - 1, replace=False)] if spt > 1 else []
            comp = [skill] + fill
            rng.shuffle(comp)
            compositions.append(comp)

    while len(compositions) < cfg.tasks:
        comp = [int(s) for s in rng.choice(cfg.n_skills, spt, replace=False)]
        if spt >= 2 and set(target) <= set(comp):
            continue
        compositions.append(comp)

    order = rng.permutation(len(compositions))
    return target, [compositions[i] for i in order]


def _render_trajectory(
    traj_id: str, skills: List[int], language: str,
    library: SkillLibrary, cfg: SynthConfig, rng: np.random.Generator,
) -> Tuple[Trajectory, List[int]]:
    clean, positions, gripper, labels = [], [], [], []
    position = np.zeros(3)

    for idx, skill in enumerate(skills):
        phase, curve = library.render(skill, rng)
        path = position + SKILL_REACH_M * phase[:, None] * library.directions[skill]
        clean.append(curve)
        positions.append(path)
        gripper.append(np.full(len(phase), float(skill % 2)))
        labels.extend([skill] * len(phase))
        position = path[-1]

        if idx < len(skills) - 1 and cfg.pause_len > 0:
            # 静止区間: 直前のスキルの最終状態を保持
            clean.append(np.repeat(curve[-1:], cfg.pause_len, axis=0))
            positions.append(np.repeat(path[-1:], cfg.pause_len, axis=0))
            gripper.append(np.full(cfg.pause_len, float(skill % 2)))
            labels.extend([skill] * cfg.pause_len)

    clean_embeddings = np.concatenate(clean)
    views = [
        clean_embeddings + rng.normal(0.0, cfg.noise_sigma, size=clean_embeddings.shape)
        for _ in range(cfg.n_views)
    ]
    embeddings = average_views(views)

    proprio = np.concatenate(
        [np.concatenate(positions), np.concatenate(gripper)[:, None]], axis=1
    ).astype(np.float32)
    actions = np.zeros_like(proprio)
    actions[:-1] = np.diff(proprio, axis=0)

    traj = Trajectory(
        id=traj_id,
        embeddings=embeddings,
        proprio=proprio,
        actions=actions,
        language=language,
        frequency_hz=cfg.frequency_hz,
    )
    return traj, labels


def _describe(skills: List[int]) -> str:
    return " then ".join(f"skill {s}" for s in skills)


def generate_synthetic(cfg: SynthConfig) -> Tuple[Dataset, Dataset, GroundTruth]:
    """(D_prior, D_target, GroundTruth) を生成（シードから完全に再現可能）"""
    rng = np.random.default_rng(cfg.seed)
    library = SkillLibrary(cfg, rng)
    target_skills, compositions = _compose_tasks(cfg, rng)

    gt = GroundTruth(labels={}, tasks={})
    prior_trajs = []
    for ti, skills in enumerate(compositions):
        task_id = f"task{ti:02d}"
        gt.tasks[task_id] = skills
        for demo in range(cfg.trajectories_per_task):
            traj_id = f"{task_id}_demo{demo:02d}"
            traj, labels = _render_trajectory(
                traj_id, skills, f"{task_id}: {_describe(skills)}", library, cfg, rng
            )
            prior_trajs.append(traj)
            gt.labels[traj_id] = labels
            gt.trajectory_tasks[traj_id] = task_id

    gt.tasks[TARGET_TASK] = target_skills
    target_trajs = []
    for demo in range(cfg.trajectories_per_task):
        traj_id = f"{TARGET_TASK}_demo{demo:02d}"
        traj, labels = _render_trajectory(
            traj_id, target_skills, f"{TARGET_TASK}: {_describe(target_skills)}", library, cfg, rng
        )
        target_trajs.append(traj)
        gt.labels[traj_id] = labels
        gt.trajectory_tasks[traj_id] = TARGET_TASK

    prior = Dataset(f"synth-prior-{cfg.seed}", cfg.embedding_dim, prior_trajs, role="prior")
    target = Dataset(f"synth-target-{cfg.seed}", cfg.embedding_dim, target_trajs, role="target")
    logger.info(
        f"合成データ生成: seed={cfg.seed}, 事前{len(prior)}本, ターゲット{len(target)}本, "
        f"目標スキル{target_skills}"
    )
    return prior, target, gt


def write_synthetic(out_dir, prior: Dataset, target: Dataset, gt: GroundTruth) -> None:
    """out_dir/prior, out_dir/target, out_dir/ground_truth.json に保存"""
    out = Path(out_dir)
    write_dataset(prior, out / "prior")
    write_dataset(target, out / "target")
    gt.save(out / GROUND_TRUTH_NAME)


def with_seed(cfg: SynthConfig, seed: int) -> SynthConfig:
    return replace(cfg, seed=seed)
