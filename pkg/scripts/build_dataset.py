#!/usr/bin/env python3
"""データセット構築 - エピソードごとの .npz を一括で取り込み、manifest形式で保存"""

import sys
import logging
import argparse
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.dataset import write_dataset
from src.errors import StrapError
from src.ingest import ingest_episodes

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="エピソード .npz からデータセットを構築")
    parser.add_argument("path", type=Path, help=".npzファイルまたはディレクトリ")
    parser.add_argument("--out", type=Path, required=True, help="出力ディレクトリ")
    parser.add_argument("--name", default=None, help="データセット名（既定: 入力ディレクトリ名）")
    parser.add_argument("--role", choices=["target", "prior"], default="prior", help="データセットの役割")
    parser.add_argument("--views", nargs="+", default=None,
                        help="平均する埋め込みキー（既定: embeddings で始まる全キー）")
    parser.add_argument("-r", "--recursive", action="store_true", help="サブディレクトリも処理")
    args = parser.parse_args()

    if args.path.is_file():
        files = [args.path]
    else:
        pattern = "**/*.npz" if args.recursive else "*.npz"
        files = sorted(args.path.glob(pattern))

    logger.info(f"対象: {len(files)}ファイル")

    try:
        dataset = ingest_episodes(files, args.name or args.path.stem, args.role, args.views)
        write_dataset(dataset, args.out)
    except StrapError as e:
        logger.error(f"{e.code}: {e}")
        sys.exit(1)

    logger.info("=" * 50)
    logger.info(f"処理完了: {len(dataset)}エピソード, {dataset.total_timesteps}ステップ")
    logger.info(f"埋め込み次元: {dataset.embedding_dim}, 役割: {dataset.role}")
    logger.info("=" * 50)


if __name__ == "__main__":
    main()
