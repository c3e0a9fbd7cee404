#!/usr/bin/env python3
"""網羅的評価スクリプト - 合成データでの検索粒度アブレーション（STRAP / 固定長 / D-T / D-S）"""

import os
os.environ["OMP_NUM_THREADS"] = "1"
os.environ["MKL_NUM_THREADS"] = "1"

import sys
import json
import logging
import argparse
import datetime
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.baselines import DEFAULT_PAD_H
from src.evaluation import METHODS, AblationReport, run_ablation
from src.segmentation import DEFAULT_WINDOW
from src.synthetic import SynthConfig

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

METHOD_NAMES = {
    "strap": "STRAP (部分軌跡 S-DTW)",
    "window": "固定長ウィンドウ (S-DTW)",
    "full_trajectory": "D-T (軌跡全体 S-DTW)",
    "state": "D-S (単一状態 cos)",
}


def print_report(report: AblationReport, cfg: SynthConfig, seeds, window: int = DEFAULT_WINDOW) -> None:
    """レポート出力"""
    print("\n" + "=" * 70)
    print("           部分軌跡検索 粒度アブレーション レポート")
    print("=" * 70)

    print("\n【合成データ設定】")
    print(f"  スキル数:         {cfg.n_skills:>8}")
    print(f"  タスク数:         {cfg.tasks:>8}")
    print(f"  タスクあたりスキル: {cfg.skills_per_task:>6}")
    print(f"  タスクあたり軌跡:   {cfg.trajectories_per_task:>6}")
    print(f"  埋め込み次元:     {cfg.embedding_dim:>8}")
    print(f"  ノイズσ / 揺らぎ:  {cfg.noise_sigma:>5} / {cfg.warp_jitter}")
    print(f"  シード:           {min(seeds)}..{max(seeds)} ({len(seeds)}個)")
    print(f"  固定長ウィンドウ:   {window:>6}")

    ks = sorted({s.k for s in report.summary})
    for k in ks:
        print(f"\n【K={k}】")
        print("-" * 70)
        print(f"{'手法':<30} {'precision':>10} {'±':>8} {'タスク数':>8} {'関連率':>8}")
        print("-" * 70)
        for method in METHODS:
            s = report.get(method, k)
            share = f"{s.mean_relevant_share:.1%}" if s.mean_relevant_share is not None else "-"
            print(f"{METHOD_NAMES[method]:<30} {s.mean_precision:>10.3f} {s.std_precision:>8.3f} "
                  f"{s.mean_task_sparsity:>8.1f} {share:>8}")

    print("\n" + "=" * 70)


def main():
    parser = argparse.ArgumentParser(description="合成データでの検索粒度アブレーション")
    parser.add_argument("--seeds", type=int, default=10, help="シード数（0から）")
    parser.add_argument("--k", type=int, nargs="+", default=[100], help="取得数（複数可）")
    parser.add_argument("--pad-h", type=int, default=DEFAULT_PAD_H, help="D-Sのパディング幅")
    parser.add_argument("--threads", type=int, default=None, help="ワーカー数")
    parser.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="固定長ウィンドウのチャンク長")
    parser.add_argument("--out", type=Path, default=Path("results/ablation_report.json"), help="出力JSON")
    args = parser.parse_args()

    cfg = SynthConfig()
    seeds = list(range(args.seeds))
    report = run_ablation(cfg, seeds, ks=args.k, pad_h=args.pad_h, threads=args.threads,
                          window=args.window)

    print_report(report, cfg, seeds, args.window)

    # JSON保存
    args.out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"timestamp": datetime.datetime.now().isoformat(), **report.to_json()}
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)
    logger.info(f"レポート保存: {args.out}")


if __name__ == "__main__":
    main()
