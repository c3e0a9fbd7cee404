"""DTW エンジン - コスト行列と (部分列) 動的時間伸縮

- cost_matrix: 埋め込み間のL2 / (1 - cos) 距離行列
- dtw: 端点固定のDTW
- sdtw: クエリ全体を参照系列の任意の連続区間に合わせる部分列DTW
- brute_force_*: 全経路列挙によるテスト用オラクル（n, m <= 8）

添字はすべて0始まり。同コストの前任は 斜め > 縦(i-1, j) > 横(i, j-1) の順で選ぶ。
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple
import logging

import numba
import numpy as np
from scipy.spatial.distance import cdist

from .dataset import SubTrajectoryRef
from .errors import DimMismatch, EmptyInput, NonFinite, SizeBound, ZeroVector

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX = 8

# バックトラック用のステップ符号
STEP_START = -1
STEP_DIAG = 0
STEP_UP = 1
STEP_LEFT = 2

# 前任の優先順（逆向きの移動量）
_STEPS = ((1, 1), (1, 0), (0, 1))


class DistanceMetric(str, Enum):
    L2 = "l2"
    ONE_MINUS_COSINE = "one_minus_cosine"


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """n×m の非負コスト行列（n: クエリ長, m: 参照長）"""
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise EmptyInput(f"コスト行列は1×1以上: shape={values.shape}")
        if not np.isfinite(values).all() or (values < 0).any():
            raise NonFinite("コスト行列は有限かつ非負である必要があります")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WarpPath:
    pairs: Tuple[Tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def cost(self, C: CostMatrix) -> float:
        """経路上のコストを先頭から累積"""
        total = 0.0
        for i, j in self.pairs:
            total = total + C.values[i, j]
        return total

    def is_valid(self, n: int, m: int, subsequence: bool = False) -> bool:
        """連続性・単調性・端点条件を満たすか"""
        if not self.pairs:
            return False
        for (i0, j0), (i1, j1) in zip(self.pairs, self.pairs[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
                return False
        (fi, fj), (li, lj) = self.pairs[0], self.pairs[-1]
        if not (fi == 0 and li == n - 1 and 0 <= fj <= lj < m):
            return False
        if subsequence:
            return True
        return fj == 0 and lj == m - 1


@dataclass(frozen=True)
class Alignment:
    """sdtw の結果（参照系列上の [start, end) と累積コスト）"""
    start: int
    end: int
    cost: float
    path: WarpPath


@dataclass(frozen=True)
class Match:
    """クエリ1つと事前軌跡1本のS-DTWマッチ"""
    trajectory_id: str
    start: int
    end: int
    cost: float
    path: WarpPath
    query: SubTrajectoryRef
    language: str = ""

    @property
    def prior_ref(self) -> SubTrajectoryRef:
        return SubTrajectoryRef(self.trajectory_id, self.start, self.end)

    @property
    def length(self) -> int:
        return self.end - self.start


def cost_matrix(q: np.ndarray, r: np.ndarray, metric: DistanceMetric = DistanceMetric.L2) -> CostMatrix:
    """クエリ q (n×E) と参照 r (m×E) のペアワイズ距離"""
    metric = DistanceMetric(metric)
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if q.ndim != 2 or r.ndim != 2 or q.shape[1] != r.shape[1]:
        raise DimMismatch(f"埋め込み次元が不一致: {q.shape} vs {r.shape}")

    if metric is DistanceMetric.ONE_MINUS_COSINE:
        if not q.any(axis=1).all() or not r.any(axis=1).all():
            raise ZeroVector("コサイン距離はゼロベクトルに定義されません")
        values = cdist(q, r, "cosine")
        # 丸め誤差で [0, 2] をはみ出さないように
        np.clip(values, 0.0, 2.0, out=values)
    else:
        values = cdist(q, r, "euclidean")

    return CostMatrix(values)


@numba.njit(nogil=True, cache=False)
def _accumulate(C, subsequence):
    n, m = C.shape
    D = np.empty((n, m), dtype=np.float64)
    steps = np.empty((n, m), dtype=np.int8)

    if subsequence:
        for j in range(m):
            D[0, j] = C[0, j]
            steps[0, j] = STEP_START
    else:
        D[0, 0] = C[0, 0]
        steps[0, 0] = STEP_START
        for j in range(1, m):
            D[0, j] = D[0, j - 1] + C[0, j]
            steps[0, j] = STEP_LEFT

    for i in range(1, n):
        D[i, 0] = D[i - 1, 0] + C[i, 0]
        steps[i, 0] = STEP_UP
        for j in range(1, m):
            best = D[i - 1, j - 1]
            step = STEP_DIAG
            if D[i - 1, j] < best:
                best = D[i - 1, j]
                step = STEP_UP
            if D[i, j - 1] < best:
                best = D[i, j - 1]
                step = STEP_LEFT
            D[i, j] = best + C[i, j]
            steps[i, j] = step
    return D, steps


@numba.njit(nogil=True, cache=False)
def _backtrack(steps, i, j):
    path = np.empty((i + j + 1, 2), dtype=np.int64)
    k = 0
    while True:
        path[k, 0] = i
        path[k, 1] = j
        k += 1
        step = steps[i, j]
        if step == STEP_START:
            break
        elif step == STEP_DIAG:
            i -= 1
            j -= 1
        elif step == STEP_UP:
            i -= 1
        else:
            j -= 1
    return path[:k][::-1]


def _to_path(array: np.ndarray) -> WarpPath:
    return WarpPath(tuple((int(i), int(j)) for i, j in array))


def dtw(C: CostMatrix) -> Tuple[float, WarpPath]:
    """端点固定DTW: (0,0) から (n-1, m-1) までの最小累積コスト"""
    D, steps = _accumulate(C.values, False)
    path = _backtrack(steps, C.n - 1, C.m - 1)
    return float(D[-1, -1]), _to_path(path)


def sdtw(C: CostMatrix) -> Alignment:
    """部分列DTW

    最終行の最小値（同値なら最小のj）からバックトラックする。
    経路は行0をちょうど1回だけ通る。
    """
    D, steps = _accumulate(C.values, True)
    end_j = int(np.argmin(D[-1]))
    path = _backtrack(steps, C.n - 1, end_j)
    return Alignment(
        start=int(path[0, 1]),
        end=end_j + 1,
        cost=float(D[-1, end_j]),
        path=_to_path(path),
    )


def _check_bound(C: CostMatrix) -> None:
    if C.n > BRUTE_FORCE_MAX or C.m > BRUTE_FORCE_MAX:
        raise SizeBound(f"全探索は {BRUTE_FORCE_MAX}×{BRUTE_FORCE_MAX} まで: {C.n}×{C.m}")


def _search(C: np.ndarray, i: int, j: int, subsequence: bool,
            trail: List[Tuple[int, int]], best: list) -> None:
    # 逆向きに 斜め > 縦 > 横 の順で辿るので、最初に見つかった最小が採用される
    trail.append((i, j))
    if (subsequence and i == 0) or (i == 0 and j == 0):
        pairs = trail[::-1]
        total = 0.0
        for pi, pj in pairs:
            total = total + C[pi, pj]
        if best[0] is None or total < best[0]:
            best[0] = total
            best[1] = tuple(pairs)
    else:
        for di, dj in _STEPS:
            if i - di >= 0 and j - dj >= 0:
                _search(C, i - di, j - dj, subsequence, trail, best)
    trail.pop()


def brute_force_dtw(C: CostMatrix) -> Tuple[float, WarpPath]:
    """全経路を列挙するDTWオラクル"""
    _check_bound(C)
    best: list = [None, None]
    _search(C.values, C.n - 1, C.m - 1, False, [], best)
    return float(best[0]), WarpPath(best[1])


def brute_force_sdtw(C: CostMatrix) -> Alignment:
    """全終点・全経路を列挙する部分列DTWオラクル"""
    _check_bound(C)
    result: Optional[Alignment] = None
    for end_j in range(C.m):
        best: list = [None, None]
        _search(C.values, C.n - 1, end_j, True, [], best)
        if result is None or best[0] < result.cost:
            pairs = best[1]
            result = Alignment(
                start=pairs[0][1],
                end=end_j + 1,
                cost=float(best[0]),
                path=WarpPath(pairs),
            )
    return result
