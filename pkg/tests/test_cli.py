"""CLIのテスト"""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from src.cli import THREADS_ENV, bench, cli, resolve_threads
from src.dataset import Dataset, Trajectory, load_dataset, write_dataset
from src.errors import ConfigInvalid
from src.synthetic import SynthConfig

EPSILON = str(SynthConfig().recommended_epsilon)
SYNTH_ARGS = ["--tasks", "4", "--trajectories-per-task", "2"]


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def synth_dir(runner, tmp_path):
    out = tmp_path / "synth"
    result = runner.invoke(cli, ["synth", "--seed", "0", *SYNTH_ARGS, "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestSynth:
    def test_files(self, synth_dir):
        """prior/, target/, ground_truth.json"""
        assert (synth_dir / "prior" / "manifest.json").exists()
        assert (synth_dir / "target" / "manifest.json").exists()
        assert (synth_dir / "ground_truth.json").exists()
        assert len(load_dataset(synth_dir / "prior")) == 8

    def test_reproducible(self, runner, tmp_path, synth_dir):
        """同じシードならバイト単位で同じ"""
        again = tmp_path / "again"
        runner.invoke(cli, ["synth", "--seed", "0", *SYNTH_ARGS, "--out", str(again)])
        assert tree_bytes(again) == tree_bytes(synth_dir)


class TestPipeline:
    def test_end_to_end(self, runner, tmp_path, synth_dir):
        """validate → segment → retrieve → export → report"""
        prior, target = str(synth_dir / "prior"), str(synth_dir / "target")

        result = runner.invoke(cli, ["validate", prior])
        assert result.exit_code == 0
        assert "OK" in result.output

        seg_path = tmp_path / "seg.json"
        result = runner.invoke(cli, ["segment", "--target", target, "--epsilon", EPSILON, "--out", str(seg_path)])
        assert result.exit_code == 0, result.output
        segs = json.loads(seg_path.read_text(encoding="utf-8"))
        assert len(segs) == 2
        assert all(len(s["chunks"]) == 2 for s in segs)

        res_path = tmp_path / "result.json"
        result = runner.invoke(cli, [
            "retrieve", "--target", target, "--prior", prior, "--k", "10",
            "--epsilon", EPSILON, "--threads", "2", "--out", str(res_path),
        ])
        assert result.exit_code == 0, result.output
        data = json.loads(res_path.read_text(encoding="utf-8"))
        assert len(data["matches"]) == 10
        assert data["config"]["k"] == 10

        export_dir = tmp_path / "export"
        result = runner.invoke(cli, [
            "export", "--result", str(res_path), "--target", target, "--prior", prior, "--out", str(export_dir),
        ])
        assert result.exit_code == 0, result.output
        assert len(load_dataset(export_dir)) == 10 + 2
        assert runner.invoke(cli, ["validate", str(export_dir)]).exit_code == 0

        result = runner.invoke(cli, [
            "report", "--result", str(res_path), "--prior", prior,
            "--ground-truth", str(synth_dir / "ground_truth.json"), "--out", str(tmp_path / "rep" / "report"),
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "rep" / "report.json").exists()
        assert (tmp_path / "rep" / "report_tasks.csv").exists()
        assert "others" in result.output

    def test_auto_epsilon(self, runner, synth_dir):
        """--auto-epsilonでも分割できる"""
        result = runner.invoke(cli, ["segment", "--target", str(synth_dir / "target"), "--auto-epsilon"])
        assert result.exit_code == 0, result.output


    def test_window_segmenter(self, runner, tmp_path, synth_dir):
        """--segmenter windowはepsilonなしで固定長に分割"""
        target = synth_dir / "target"
        seg_path = tmp_path / "seg.json"
        result = runner.invoke(cli, [
            "segment", "--target", str(target), "--segmenter", "window", "--window", "30", "--out", str(seg_path),
        ])
        assert result.exit_code == 0, result.output
        segs = json.loads(seg_path.read_text(encoding="utf-8"))
        lengths = {t.id: t.length for t in load_dataset(target).trajectories}
        for seg in segs:
            bounds = seg["chunks"]
            assert bounds[0][0] == 0 and bounds[-1][1] == lengths[seg["trajectory_id"]]
            assert all(a[1] == b[0] for a, b in zip(bounds, bounds[1:]))
            assert all(30 <= e - s < 60 for s, e in bounds)

        out = tmp_path / "result.json"
        result = runner.invoke(cli, [
            "retrieve", "--target", str(target), "--prior", str(synth_dir / "prior"),
            "--segmenter", "window", "--k", "4", "--threads", "1", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        config = json.loads(out.read_text(encoding="utf-8"))["config"]
        assert config["segmenter"] == "window"
        assert config["window"] == 30


class TestErrors:
    def test_missing_epsilon(self, runner, synth_dir):
        """epsilonの指定がなければ使い方の誤り（終了コード2）"""
        result = runner.invoke(cli, ["segment", "--target", str(synth_dir / "target")])
        assert result.exit_code == 2
        both = runner.invoke(cli, ["segment", "--target", str(synth_dir / "target"), "--epsilon", "0.1", "--auto-epsilon"])
        assert both.exit_code == 2

    def test_dim_mismatch(self, runner, tmp_path, synth_dir):
        """次元の違う事前データセットは終了コード1"""
        H = 30
        wide = Trajectory(
            "w0",
            np.ones((H, 8), dtype=np.float32),
            np.zeros((H, 3), dtype=np.float32),
            np.zeros((H, 1), dtype=np.float32),
        )
        write_dataset(Dataset("wide", 8, [wide], role="prior"), tmp_path / "wide")
        result = runner.invoke(cli, [
            "retrieve", "--target", str(synth_dir / "target"), "--prior", str(tmp_path / "wide"), "--epsilon", EPSILON,
        ])
        assert result.exit_code == 1
        assert "DIM_MISMATCH" in result.output

    def test_nan_binary(self, runner, synth_dir):
        """NaNを書き込んだデータセットは検証で終了コード1"""
        path = synth_dir / "prior" / "task00_demo00" / "embeddings.f32"
        raw = bytearray(path.read_bytes())
        raw[:4] = np.float32(np.nan).tobytes()
        path.write_bytes(bytes(raw))
        result = runner.invoke(cli, ["validate", str(synth_dir / "prior")])
        assert result.exit_code == 1
        assert "NON_FINITE" in result.output

    def test_retrieve_nan_prior(self, runner, synth_dir):
        """NaNを含む事前データセットはretrieveでも検証エラー（トレースバックなし）"""
        path = synth_dir / "prior" / "task00_demo00" / "embeddings.f32"
        raw = bytearray(path.read_bytes())
        raw[:4] = np.float32(np.nan).tobytes()
        path.write_bytes(bytes(raw))
        result = runner.invoke(cli, [
            "retrieve", "--target", str(synth_dir / "target"), "--prior", str(synth_dir / "prior"), "--epsilon", EPSILON,
        ])
        assert result.exit_code == 1
        assert "NON_FINITE" in result.output
        assert "VALIDATION_FAILED" in result.output
        assert "Traceback" not in result.output

    def test_missing_manifest(self, runner, tmp_path):
        """manifest.jsonのないディレクトリ"""
        result = runner.invoke(cli, ["validate", str(tmp_path)])
        assert result.exit_code == 1
        assert "MISSING_MANIFEST" in result.output


class TestThreads:
    def test_env_overrides_flag(self, monkeypatch):
        """STRAP_THREADSは--threadsより優先"""
        monkeypatch.setenv(THREADS_ENV, "3")
        assert resolve_threads(5) == 3
        monkeypatch.delenv(THREADS_ENV)
        assert resolve_threads(5) == 5

    def test_invalid_env(self, runner, monkeypatch, synth_dir):
        """不正なSTRAP_THREADSは設定エラー"""
        monkeypatch.setenv(THREADS_ENV, "0")
        with pytest.raises(ConfigInvalid):
            resolve_threads(None)
        result = runner.invoke(cli, [
            "retrieve", "--target", str(synth_dir / "target"), "--prior", str(synth_dir / "prior"), "--epsilon", EPSILON,
        ])
        assert result.exit_code == 1
        assert "CONFIG_INVALID" in result.output


class TestConfigFile:
    def test_defaults_from_file(self, runner, tmp_path, synth_dir):
        """--configのJSONがフラグの既定値になる"""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"k": 3, "epsilon": float(EPSILON), "threads": 1}), encoding="utf-8")
        out = tmp_path / "result.json"
        result = runner.invoke(cli, [
            "--config", str(config), "retrieve",
            "--target", str(synth_dir / "target"), "--prior", str(synth_dir / "prior"), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        assert len(json.loads(out.read_text(encoding="utf-8"))["matches"]) == 3

    def test_flag_wins(self, runner, tmp_path, synth_dir):
        """明示したフラグはファイルより優先"""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"k": 3, "epsilon": float(EPSILON)}), encoding="utf-8")
        out = tmp_path / "result.json"
        result = runner.invoke(cli, [
            "--config", str(config), "retrieve", "--k", "5", "--threads", "1",
            "--target", str(synth_dir / "target"), "--prior", str(synth_dir / "prior"), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        assert len(json.loads(out.read_text(encoding="utf-8"))["matches"]) == 5


class TestBench:
    def test_small_bench(self, runner, tmp_path):
        """小規模ベンチマークとスレッドスイープ"""
        out = tmp_path / "bench" / "runtime"
        result = runner.invoke(cli, [
            "bench", "--sizes", "2,4", "--traj-len", "20", "--n-queries", "2", "--query-len", "5",
            "--embedding-dim", "4", "--threads", "1", "--sweep-threads", "1,2", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "bench" / "runtime.json").exists()
        assert (tmp_path / "bench" / "runtime.csv").exists()
        sweep = json.loads((tmp_path / "bench" / "runtime_threads.json").read_text(encoding="utf-8"))
        assert sweep["identical"]

    def test_bad_sizes(self, runner):
        """整数でない規模は使い方の誤り"""
        result = runner.invoke(cli, ["bench", "--sizes", "a,b"])
        assert result.exit_code == 2

    def test_default_trials(self, runner):
        """--trialsの既定は10"""
        trials = next(p for p in bench.params if p.name == "trials")
        assert trials.default == 10
        assert runner.invoke(cli, ["bench", "--help"]).exit_code == 0

    def test_too_few_trials(self, runner):
        """trials<3は設定エラー"""
        result = runner.invoke(cli, ["bench", "--sizes", "2,4", "--trials", "2", "--embedding-dim", "4"])
        assert result.exit_code == 1
        assert "CONFIG_INVALID" in result.output
