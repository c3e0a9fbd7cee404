"""DTWエンジンのテスト"""

import math

import numpy as np
import pytest

from src.dtw import (
    CostMatrix,
    DistanceMetric,
    WarpPath,
    brute_force_dtw,
    brute_force_sdtw,
    cost_matrix,
    dtw,
    sdtw,
)
from src.errors import DimMismatch, EmptyInput, NonFinite, SizeBound, ZeroVector

ENTRIES = np.array([0.0, 0.5, 1.0, 2.0])


def scalar_costs(x, y) -> CostMatrix:
    """スカラー系列の |x - y|"""
    return CostMatrix(np.abs(np.subtract.outer(np.asarray(x, float), np.asarray(y, float))))


def random_costs(rng: np.random.Generator, max_n: int = 6, max_m: int = 6) -> CostMatrix:
    n, m = int(rng.integers(1, max_n + 1)), int(rng.integers(1, max_m + 1))
    return CostMatrix(rng.choice(ENTRIES, size=(n, m)))


class TestCostMatrix:
    def test_identity_diagonal(self):
        """q=rなら対角は0"""
        q = np.random.default_rng(0).standard_normal((5, 3))
        C = cost_matrix(q, q, DistanceMetric.L2)
        assert C.values.shape == (5, 5)
        np.testing.assert_array_equal(np.diag(C.values), np.zeros(5))

    def test_unit_axes(self):
        """[[1,0]] と [[0,1]] のL2は√2"""
        C = cost_matrix(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
        assert C.values[0, 0] == pytest.approx(math.sqrt(2))

    def test_cosine(self):
        """[[1,0]] と [[1,1]] の 1-cos は 1-1/√2"""
        C = cost_matrix(np.array([[1.0, 0.0]]), np.array([[1.0, 1.0]]), "one_minus_cosine")
        assert C.values[0, 0] == pytest.approx(1 - 1 / math.sqrt(2), abs=1e-12)

    def test_cosine_range(self):
        """1-cos は [0, 2]"""
        rng = np.random.default_rng(1)
        C = cost_matrix(rng.standard_normal((20, 4)), rng.standard_normal((30, 4)), "one_minus_cosine")
        assert (C.values >= 0).all() and (C.values <= 2).all()
        C = cost_matrix(np.array([[1.0, 2.0]]), np.array([[-1.0, -2.0]]), "one_minus_cosine")
        assert C.values[0, 0] == pytest.approx(2.0)

    def test_errors(self):
        """次元不一致・ゼロベクトル"""
        with pytest.raises(DimMismatch):
            cost_matrix(np.zeros((2, 3)), np.zeros((2, 4)))
        with pytest.raises(ZeroVector):
            cost_matrix(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), "one_minus_cosine")
        # L2ではゼロベクトルも可
        assert cost_matrix(np.zeros((1, 2)), np.ones((1, 2))).values[0, 0] == pytest.approx(math.sqrt(2))

    def test_invalid_values(self):
        """空・負・非有限の行列は作れない"""
        with pytest.raises(EmptyInput):
            CostMatrix(np.zeros((0, 3)))
        with pytest.raises(NonFinite):
            CostMatrix(np.array([[-1.0]]))
        with pytest.raises(NonFinite) as exc:
            CostMatrix(np.array([[np.nan]]))
        assert exc.value.code == "NON_FINITE"
        # 組み込み例外としても捕捉できる
        with pytest.raises(ValueError):
            CostMatrix(np.array([[np.inf]]))

    def test_translation_invariance(self):
        """L2は全行に同じベクトルを足しても不変"""
        rng = np.random.default_rng(2)
        q = rng.integers(-5, 5, size=(4, 3)).astype(float)
        r = rng.integers(-5, 5, size=(9, 3)).astype(float)
        shift = np.array([3.0, -7.0, 11.0])
        C1, C2 = cost_matrix(q, r), cost_matrix(q + shift, r + shift)
        np.testing.assert_array_equal(C1.values, C2.values)
        assert sdtw(C1) == sdtw(C2)
        assert dtw(C1) == dtw(C2)


class TestDTW:
    def test_zero_matrix(self):
        """ゼロ行列はコスト0、斜め優先の経路"""
        cost, path = dtw(CostMatrix(np.zeros((3, 3))))
        assert cost == 0.0
        assert path.pairs == ((0, 0), (1, 1), (2, 2))

    def test_warped_copy(self):
        """X=[0,1,2], Y=[0,0,1,2,2] はコスト0"""
        cost, path = dtw(scalar_costs([0, 1, 2], [0, 0, 1, 2, 2]))
        assert cost == 0.0
        assert path.is_valid(3, 5)

    def test_small_example(self):
        """X=[1,3], Y=[0,2,4] はコスト3"""
        C = scalar_costs([1, 3], [0, 2, 4])
        cost, path = dtw(C)
        assert cost == 3.0
        assert path.cost(C) == 3.0
        assert (cost, path) == brute_force_dtw(C)

    def test_single_cell(self):
        """1×1はC(0,0)"""
        C = CostMatrix(np.array([[1.5]]))
        assert dtw(C) == (1.5, WarpPath(((0, 0),)))
        assert brute_force_dtw(C) == dtw(C)


class TestSDTW:
    def test_exact_subslice(self):
        """クエリ [5,6] は参照 [0,5,6,0] の [1,3) に一致"""
        result = sdtw(scalar_costs([5, 6], [0, 5, 6, 0]))
        assert (result.cost, result.start, result.end) == (0.0, 1, 3)

    def test_small_example(self):
        """[1,3] / [0,2,4]: 最終行 [4,2,2]、最小のjを採用"""
        C = scalar_costs([1, 3], [0, 2, 4])
        result = sdtw(C)
        assert result.cost == 2.0
        assert (result.start, result.end) == (0, 2)
        assert result.path.pairs == ((0, 0), (1, 1))
        assert result == brute_force_sdtw(C)

    def test_single_row_query(self):
        """n=1なら最小のC(0,j)、同値は最小のj"""
        result = sdtw(CostMatrix(np.array([[3.0, 1.0, 2.0, 1.0]])))
        assert (result.cost, result.start, result.end) == (1.0, 1, 2)
        assert result.path.pairs == ((0, 1),)

    def test_path_touches_first_row_once(self):
        """経路は行0を1回だけ通る"""
        rng = np.random.default_rng(5)
        for _ in range(100):
            result = sdtw(CostMatrix(rng.random((int(rng.integers(1, 8)), int(rng.integers(1, 12))))))
            assert sum(1 for i, _ in result.path.pairs if i == 0) == 1

    def test_exact_slices(self):
        """クエリが参照の厳密なスライスならコスト0でその区間を返す（500ケース）"""
        rng = np.random.default_rng(7)
        for _ in range(500):
            m = int(rng.integers(2, 60))
            r = rng.standard_normal((m, 8))
            start = int(rng.integers(0, m - 1))
            end = int(rng.integers(start + 1, m + 1))
            result = sdtw(cost_matrix(r[start:end], r))
            assert result.cost == 0.0
            assert (result.start, result.end) == (start, end)


class TestOracle:
    def check(self, C: CostMatrix):
        cost, path = dtw(C)
        oracle_cost, oracle_path = brute_force_dtw(C)
        assert cost == pytest.approx(oracle_cost, abs=1e-9)
        assert path == oracle_path

        result, oracle = sdtw(C), brute_force_sdtw(C)
        assert result.cost == pytest.approx(oracle.cost, abs=1e-9)
        assert result.path == oracle.path
        assert (result.start, result.end) == (oracle.start, oracle.end)

    def test_oracle_equivalence(self):
        """n,m<=6、要素 {0,0.5,1,2} で全探索と一致"""
        rng = np.random.default_rng(0)
        for _ in range(200):
            self.check(random_costs(rng))

    @pytest.mark.slow
    def test_oracle_equivalence_full(self):
        """同上（2000ケース）"""
        rng = np.random.default_rng(2024)
        for _ in range(2000):
            self.check(random_costs(rng))

    @pytest.mark.slow
    def test_oracle_real_valued(self):
        """5×7の実数行列（1000シード）"""
        for seed in range(1000):
            self.check(CostMatrix(np.random.default_rng(seed).random((5, 7))))

    def test_oracle_real_valued_small(self):
        """5×7の実数行列（20シード）"""
        for seed in range(20):
            self.check(CostMatrix(np.random.default_rng(seed).random((5, 7))))

    def test_size_bound(self):
        """全探索は8×8まで"""
        with pytest.raises(SizeBound):
            brute_force_dtw(CostMatrix(np.zeros((9, 2))))
        with pytest.raises(SizeBound):
            brute_force_sdtw(CostMatrix(np.zeros((2, 9))))


class TestProperties:
    def test_dominance(self):
        """sdtwのコストはdtw以下"""
        rng = np.random.default_rng(11)
        for _ in range(300):
            C = CostMatrix(rng.random((int(rng.integers(1, 15)), int(rng.integers(1, 30)))))
            assert sdtw(C).cost <= dtw(C)[0]

    def test_path_validity_and_cost(self):
        """経路の連続性・単調性・端点と、経路上のコスト和"""
        rng = np.random.default_rng(12)
        for _ in range(300):
            C = CostMatrix(rng.random((int(rng.integers(1, 20)), int(rng.integers(1, 40)))))
            cost, path = dtw(C)
            assert path.is_valid(C.n, C.m)
            assert path.cost(C) == pytest.approx(cost, rel=1e-6)

            result = sdtw(C)
            assert result.path.is_valid(C.n, C.m, subsequence=True)
            assert result.path.cost(C) == pytest.approx(result.cost, rel=1e-6)
            assert result.path.pairs[0] == (0, result.start)
            assert result.path.pairs[-1] == (C.n - 1, result.end - 1)

    def test_determinism(self):
        """同じ入力なら同じ経路"""
        C = CostMatrix(np.random.default_rng(13).choice(ENTRIES, size=(12, 30)))
        assert sdtw(C) == sdtw(C)
        assert dtw(C) == dtw(C)

    def test_invalid_paths(self):
        """不正な経路を検出"""
        assert not WarpPath(()).is_valid(1, 1)
        assert not WarpPath(((0, 0), (2, 2))).is_valid(3, 3)  # 飛び
        assert not WarpPath(((0, 1), (1, 0))).is_valid(2, 2)  # 逆行
        assert not WarpPath(((0, 1), (1, 2))).is_valid(2, 3)  # DTWは(0,0)始まり
        assert WarpPath(((0, 1), (1, 2))).is_valid(2, 3, subsequence=True)
