"""検索品質評価のテスト"""

import numpy as np
import pytest

from src.dataset import Dataset, SubTrajectoryRef, Trajectory
from src.dtw import Match, WarpPath
from src.errors import UnknownId
from src.evaluation import METHODS, evaluate, majority_skill, run_ablation
from src.retriever import RetrievalConfig, RetrievalResult, retrieve
from src.segmentation import SegmentationConfig
from src.synthetic import GroundTruth, SynthConfig

QUERY = SubTrajectoryRef("tgt", 0, 10)


def match(traj_id: str, start: int, end: int, query: SubTrajectoryRef = QUERY) -> Match:
    return Match(traj_id, start, end, 0.0, WarpPath(()), query)


def result_of(matches) -> RetrievalResult:
    counts = {}
    for m in matches:
        counts[m.query] = counts.get(m.query, 0) + 1
    return RetrievalResult(list(matches), counts)


@pytest.fixture
def gt():
    """クエリはスキル0、a・bはスキル0/1、cはスキル2"""
    return GroundTruth(
        labels={
            "tgt": [0] * 10,
            "a": [0] * 10 + [1] * 10,
            "b": [1] * 10 + [0] * 10,
            "c": [2] * 20,
        },
        tasks={"A": [0, 1], "B": [1, 0], "C": [2], "target": [0]},
        trajectory_tasks={"a": "A", "b": "B", "c": "C", "tgt": "target"},
    )


class TestMajoritySkill:
    def test_majority(self):
        """最頻のスキル"""
        assert majority_skill([3, 1, 3, 3, 1]) == 3

    def test_tie(self):
        """同数なら小さいID"""
        assert majority_skill([2, 2, 1, 1]) == 1
        assert majority_skill([5]) == 5


class TestEvaluate:
    def test_perfect(self, gt):
        """取得したタイムステップが全て一致すれば1.0"""
        metrics = evaluate(result_of([match("a", 0, 10), match("b", 12, 20)]), gt)
        assert metrics.precision_at_k == 1.0
        assert metrics.task_sparsity == 2
        assert metrics.retrieved_timesteps == 18
        assert metrics.relevant_share == 1.0

    def test_partial(self, gt):
        """[5,15) は半分だけ一致、cは一致なし"""
        metrics = evaluate(result_of([match("a", 5, 15), match("c", 0, 10)]), gt)
        assert metrics.precision_at_k == pytest.approx(5 / 20)
        assert metrics.task_shares == {"A": 0.5, "C": 0.5}
        assert metrics.relevant_share == pytest.approx(0.5)

    def test_random_labels(self):
        """一様ランダムなラベル（10スキル）ならおよそ0.1"""
        rng = np.random.default_rng(0)
        labels = {f"p{i}": rng.integers(0, 10, size=200).tolist() for i in range(20)}
        labels["tgt"] = [0] * 10
        gt = GroundTruth(labels=labels, tasks={})
        matches = []
        for _ in range(200):
            start = int(rng.integers(0, 180))
            matches.append(match(f"p{int(rng.integers(0, 20))}", start, start + 20))
        metrics = evaluate(result_of(matches), gt)
        assert metrics.precision_at_k == pytest.approx(0.1, abs=0.05)
        # タスク対応がなければ軌跡ごとに1タスク
        assert metrics.task_sparsity == len({m.trajectory_id for m in matches})
        assert metrics.relevant_share is None

    def test_empty(self, gt):
        """マッチ0件"""
        metrics = evaluate(RetrievalResult([], {}), gt)
        assert metrics.empty
        assert metrics.precision_at_k == 0.0
        assert metrics.task_sparsity == 0

    def test_unknown_id(self, gt):
        """正解ラベルにない軌跡"""
        with pytest.raises(UnknownId):
            evaluate(result_of([match("ghost", 0, 5)]), gt)
        with pytest.raises(UnknownId):
            evaluate(result_of([match("a", 0, 5, SubTrajectoryRef("ghost", 0, 5))]), gt)

    def test_self_retrieval(self):
        """ターゲットのコピーを検索すれば1.0"""
        rng = np.random.default_rng(1)
        H = 60
        steps = np.ones(H - 1)
        for c in (20, 40):
            steps[c - 1] = steps[c] = 0.0
        proprio = np.zeros((H, 3), dtype=np.float32)
        proprio[:, 0] = np.concatenate([[0.0], np.cumsum(steps)])
        emb = rng.standard_normal((H, 6)).astype(np.float32)
        actions = np.zeros((H, 1), dtype=np.float32)

        target = Dataset("target", 6, [Trajectory("tgt", emb, proprio, actions)], role="target")
        prior = Dataset("prior", 6, [Trajectory("copy", emb.copy(), proprio, actions)], role="prior")
        labels = [0] * 20 + [1] * 20 + [2] * 20
        gt = GroundTruth(labels={"tgt": labels, "copy": labels}, tasks={})

        result = retrieve(target, prior, RetrievalConfig(SegmentationConfig(0.5, 5), k=3, threads=1))
        assert len(result) == 3
        assert evaluate(result, gt).precision_at_k == 1.0


class TestAblation:
    def test_small_run(self):
        """2シード × 1つのk × 4手法"""
        cfg = SynthConfig(tasks=6, trajectories_per_task=2)
        report = run_ablation(cfg, seeds=[0, 1], ks=(10,), threads=2)
        assert len(report.rows) == 8
        assert [s.method for s in report.summary] == list(METHODS)
        assert "window" in METHODS
        for method in METHODS:
            summary = report.get(method, 10)
            assert 0.0 <= summary.mean_precision <= 1.0
        data = report.to_json()
        assert set(data) == {"rows", "summary"}
        with pytest.raises(KeyError):
            report.get("strap", 99)

    def test_strap_beats_full_trajectory(self):
        """seed 0: 部分軌跡検索は軌跡全体の検索より高精度"""
        report = run_ablation(SynthConfig(seed=0), seeds=[0], threads=2)
        assert report.get("strap", 100).mean_precision > report.get("full_trajectory", 100).mean_precision

    @pytest.mark.slow
    def test_acceptance(self):
        """10シード: 部分軌跡検索が0.90以上で両ベースラインを0.05以上上回る"""
        report = run_ablation(SynthConfig(), seeds=range(10), ks=(100,))
        strap = report.get("strap", 100)
        assert strap.mean_precision >= 0.90
        assert strap.mean_precision >= report.get("full_trajectory", 100).mean_precision + 0.05
        assert strap.mean_precision >= report.get("state", 100).mean_precision + 0.05
        assert strap.mean_relevant_share >= 0.95
