"""CLI ツール - セグメンテーション・検索・エクスポート・レポート・合成データ・ベンチマーク

    python -m src.cli retrieve --target T/ --prior P/ --k 100 --epsilon 0.01 --out r.json

終了コード: 0 成功 / 1 検証失敗・実行時エラー / 2 使い方の誤り
"""

from functools import wraps
from pathlib import Path
from typing import List, Optional
import json
import logging
import os

import click

from .benchmark import DEFAULT_SIZES, DEFAULT_TRAJ_LEN, DEFAULT_TRIALS, BenchWorkload, run_benchmark, thread_sweep
from .dataset import Dataset, load_dataset, validate_dataset
from .dtw import DistanceMetric
from .errors import ConfigInvalid, StrapError, ValidationFailed
from .report import retrieval_report
from .retriever import DEFAULT_K, RetrievalConfig, RetrievalResult, default_threads, export_retrieval, retrieve
from .segmentation import (
    DEFAULT_WINDOW,
    MIN_CHUNK_LEN,
    SEGMENTERS,
    SegmentationConfig,
    calibrate_epsilon,
    segment_dataset,
    segmentations_to_json,
)
from .synthetic import GroundTruth, SynthConfig, generate_synthetic, write_synthetic

logger = logging.getLogger(__name__)

THREADS_ENV = "STRAP_THREADS"


def fail_on_error(f):
    """StrapErrorを "<CODE>: <message>" として標準エラーに出し、終了コード1で終える"""
    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except StrapError as e:
            click.echo(f"{e.code}: {e}", err=True)
            click.get_current_context().exit(1)
    return wrapper


def resolve_threads(threads: Optional[int]) -> int:
    """環境変数 STRAP_THREADS は --threads より優先"""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigInvalid(f"{THREADS_ENV}が整数ではありません: {env!r}") from None
        if value < 1:
            raise ConfigInvalid(f"{THREADS_ENV}は1以上: {value}")
        return value
    return threads or default_threads()


def _parse_ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"カンマ区切りの整数が必要です: {text}") from None


def _load_valid(path: str) -> Dataset:
    """読み込んで検証し、違反があれば一覧を出してValidationFailed"""
    dataset = load_dataset(path)
    report = validate_dataset(dataset)
    if not report.ok:
        for issue in report.issues:
            click.echo(f"{issue.code}: {issue.trajectory_id or '-'}: {issue.message}", err=True)
        raise ValidationFailed(report)
    return dataset


def _segmentation_config(
    targets: Dataset,
    epsilon: Optional[float],
    auto_epsilon: bool,
    min_len: int,
    segmenter: str = "velocity",
    window: int = DEFAULT_WINDOW,
) -> SegmentationConfig:
    if segmenter == "window":
        # 固定長分割では速度しきい値を使わない
        return SegmentationConfig(epsilon=0.0, method="window", window=window)
    if epsilon is None and not auto_epsilon:
        raise click.UsageError("--epsilon か --auto-epsilon のどちらかを指定してください")
    if epsilon is not None and auto_epsilon:
        raise click.UsageError("--epsilon と --auto-epsilon は同時に指定できません")
    if auto_epsilon:
        epsilon = calibrate_epsilon(targets.trajectories)
    return SegmentationConfig(epsilon=epsilon, min_len=min_len)


def _write_or_echo(text: str, out: Optional[str]) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"保存: {path}")
    else:
        click.echo(text)


def _load_config(ctx, param, value):
    if value is None:
        return None
    data = json.loads(Path(value).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise click.BadParameter("設定ファイルはJSONオブジェクトである必要があります")
    # フラットな {引数名: 値} をすべてのサブコマンドの既定値にする
    ctx.default_map = {name: data for name in cli.commands}
    return value


def segmentation_options(f):
    f = click.option("--window", default=DEFAULT_WINDOW, show_default=True, help="固定長分割のチャンク長")(f)
    f = click.option("--segmenter", type=click.Choice(SEGMENTERS), default="velocity", show_default=True,
                     help="velocity: 静止点で分割 / window: 固定長で分割")(f)
    f = click.option("--min-len", default=MIN_CHUNK_LEN, show_default=True, help="チャンクの最小長")(f)
    f = click.option("--auto-epsilon", is_flag=True, help="速度の10パーセンタイルをepsilonにする")(f)
    f = click.option("--epsilon", type=float, default=None, help="速度しきい値 [m/step]")(f)
    return f


@click.group(name="strap")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="フラグの既定値を与えるJSONファイル")
@click.option("--verbose", "-v", is_flag=True, help="DEBUGログを出力")
def cli(verbose: bool):
    """STRAP 部分軌跡検索 CLI"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )


@cli.command()
@click.argument("path", type=click.Path(exists=True, file_okay=False))
@fail_on_error
def validate(path: str):
    """データセットを検証"""
    report = validate_dataset(load_dataset(path))
    for issue in report.issues:
        click.echo(f"{issue.code}: {issue.trajectory_id or '-'}: {issue.message}", err=True)
    if not report.ok:
        click.get_current_context().exit(1)
    click.echo("OK")


@cli.command()
@click.option("--target", required=True, type=click.Path(exists=True, file_okay=False), help="ターゲットデータセット")
@segmentation_options
@click.option("--out", type=click.Path(dir_okay=False), help="出力JSON")
@fail_on_error
def segment(target: str, epsilon: Optional[float], auto_epsilon: bool, min_len: int, segmenter: str, window: int,
            out: Optional[str]):
    """ターゲット軌跡をチャンクに分割"""
    targets = _load_valid(target)
    cfg = _segmentation_config(targets, epsilon, auto_epsilon, min_len, segmenter, window)
    segs = segment_dataset(targets, cfg)
    _write_or_echo(json.dumps(segmentations_to_json(segs), ensure_ascii=False, indent=2), out)


@cli.command(name="retrieve")
@click.option("--target", required=True, type=click.Path(exists=True, file_okay=False), help="ターゲットデータセット")
@click.option("--prior", required=True, type=click.Path(exists=True, file_okay=False), help="事前データセット")
@click.option("--k", "k", default=DEFAULT_K, show_default=True, help="取得するマッチ数")
@click.option("--metric", type=click.Choice([m.value for m in DistanceMetric]), default=DistanceMetric.L2.value,
              show_default=True, help="埋め込み間の距離")
@segmentation_options
@click.option("--dedupe", is_flag=True, help="同じ区間の重複を除く")
@click.option("--threads", type=int, default=None, help="ワーカー数（既定: 物理コア数）")
@click.option("--progress", is_flag=True, help="進捗を表示")
@click.option("--out", type=click.Path(dir_okay=False), help="出力JSON")
@fail_on_error
def retrieve_command(target, prior, k, metric, epsilon, auto_epsilon, min_len, segmenter, window, dedupe, threads,
                     progress, out):
    """S-DTWで部分軌跡を検索"""
    targets = _load_valid(target)
    prior_ds = _load_valid(prior)
    cfg = RetrievalConfig(
        segmentation=_segmentation_config(targets, epsilon, auto_epsilon, min_len, segmenter, window),
        k=k,
        metric=DistanceMetric(metric),
        dedupe=dedupe,
        threads=resolve_threads(threads),
        progress=progress,
    )
    result = retrieve(targets, prior_ds, cfg)
    _write_or_echo(result.dumps(), out)


def _load_result(path: str) -> RetrievalResult:
    return RetrievalResult.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@cli.command()
@click.option("--result", "result_path", required=True, type=click.Path(exists=True, dir_okay=False), help="検索結果JSON")
@click.option("--target", required=True, type=click.Path(exists=True, file_okay=False), help="ターゲットデータセット")
@click.option("--prior", required=True, type=click.Path(exists=True, file_okay=False), help="事前データセット")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="出力ディレクトリ")
@fail_on_error
def export(result_path: str, target: str, prior: str, out: str):
    """検索結果とターゲットをデータセットとして書き出す"""
    exported = export_retrieval(_load_result(result_path), _load_valid(target), _load_valid(prior), out)
    click.echo(f"{len(exported)}本 -> {out}")


@cli.command()
@click.option("--result", "result_path", required=True, type=click.Path(exists=True, dir_okay=False), help="検索結果JSON")
@click.option("--prior", required=True, type=click.Path(exists=True, file_okay=False), help="事前データセット")
@click.option("--ground-truth", type=click.Path(exists=True, dir_okay=False), help="合成データの正解JSON")
@click.option("--top", default=5, show_default=True, help="個別に表示するタスク数")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="出力先（.json と *_tasks.csv, *_matches.csv）")
@fail_on_error
def report(result_path: str, prior: str, ground_truth: Optional[str], top: int, out: str):
    """タスク分布と開始・終了位置の分布を出力"""
    gt = GroundTruth.load(ground_truth) if ground_truth else None
    rep = retrieval_report(_load_result(result_path), _load_valid(prior), gt, top_n=top)
    rep.write(out)
    for share in rep.task_shares:
        click.echo(f"{share.task}: {share.share:.1%} ({share.timesteps}ステップ)")


@cli.command()
@click.option("--seed", default=0, show_default=True, help="乱数シード")
@click.option("--n-skills", default=8, show_default=True)
@click.option("--tasks", default=12, show_default=True)
@click.option("--skills-per-task", default=2, show_default=True)
@click.option("--trajectories-per-task", default=5, show_default=True)
@click.option("--embedding-dim", default=16, show_default=True)
@click.option("--warp-jitter", default=0.2, show_default=True)
@click.option("--noise-sigma", default=0.05, show_default=True)
@click.option("--n-views", default=1, show_default=True, help="平均するカメラ数")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="出力ディレクトリ")
@fail_on_error
def synth(seed, n_skills, tasks, skills_per_task, trajectories_per_task, embedding_dim,
          warp_jitter, noise_sigma, n_views, out):
    """スキルを埋め込んだ合成データセットを生成"""
    cfg = SynthConfig(
        n_skills=n_skills,
        tasks=tasks,
        skills_per_task=skills_per_task,
        trajectories_per_task=trajectories_per_task,
        embedding_dim=embedding_dim,
        warp_jitter=warp_jitter,
        noise_sigma=noise_sigma,
        seed=seed,
        n_views=n_views,
    )
    prior, target, gt = generate_synthetic(cfg)
    write_synthetic(out, prior, target, gt)
    click.echo(f"prior {len(prior)}本, target {len(target)}本 -> {out} (推奨epsilon {cfg.recommended_epsilon:.6g})")


@cli.command()
@click.option("--sizes", default=",".join(map(str, DEFAULT_SIZES)), show_default=True, help="事前軌跡数（カンマ区切り）")
@click.option("--traj-len", default=DEFAULT_TRAJ_LEN, show_default=True)
@click.option("--n-queries", default=5, show_default=True)
@click.option("--query-len", default=50, show_default=True)
@click.option("--embedding-dim", default=768, show_default=True)
@click.option("--trials", default=DEFAULT_TRIALS, show_default=True, help="規模ごとの試行回数（3以上）")
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", type=int, default=None, help="ワーカー数（既定: 物理コア数）")
@click.option("--sweep-threads", default=None, help="スレッド数スイープ（例: 1,2,4）")
@click.option("--out", type=click.Path(dir_okay=False), help="出力先（.json と .csv）")
@fail_on_error
def bench(sizes, traj_len, n_queries, query_len, embedding_dim, trials, seed, threads, sweep_threads, out):
    """事前データセットの規模に対する検索時間を計測"""
    workload = BenchWorkload(n_queries=n_queries, query_len=query_len, embedding_dim=embedding_dim)
    rep = run_benchmark(_parse_ints(sizes), traj_len, workload, trials, seed, resolve_threads(threads))
    for row in rep.rows:
        click.echo(f"M={row.prior_size}: {row.wall_ms_mean:.1f}ms ± {row.wall_ms_std:.1f}ms")
    click.echo(f"slope={rep.fit.slope:.4f}ms/traj, R²={rep.fit.r2:.4f}")
    if out:
        rep.write(out)

    if sweep_threads:
        sweep = thread_sweep(_parse_ints(sweep_threads), traj_len=traj_len, workload=workload)
        for row in sweep.rows:
            click.echo(f"threads={row.threads}: {row.wall_ms:.1f}ms")
        click.echo(f"結果の同一性: {'OK' if sweep.identical else 'NG'}")
        if out:
            Path(out).with_name(Path(out).stem + "_threads.json").write_text(
                json.dumps(sweep.to_json(), indent=2), encoding="utf-8"
            )
        if not sweep.identical:
            click.get_current_context().exit(1)


if __name__ == "__main__":
    cli()
