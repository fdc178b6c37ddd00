import numpy as np
import pytest

from qcurv import toda


def op_pair(K=50):
    return (toda.TodaOperator(kind="translation", K=K, period=2.5),
            toda.TodaOperator(kind="dilation", K=K))


class TestTypes:
    def test_kind_validation(self):
        with pytest.raises(ValueError, match="kind"):
            toda.TodaOperator(kind="rotation", K=10)
        with pytest.raises(ValueError, match="period"):
            toda.TodaOperator(kind="translation", K=10)
        with pytest.raises(ValueError, match="no period"):
            toda.TodaOperator(kind="dilation", K=10, period=2.0)

    def test_seq_validation(self):
        with pytest.raises(ValueError, match="finite"):
            toda.WeightedSeq(entries=np.array([1.0, np.inf]), tau=0.5)
        with pytest.raises(ValueError, match="tau"):
            toda.WeightedSeq(entries=np.ones(3), tau=0.0)

    def test_band_values(self):
        tr, di = op_pair(6)
        T = toda.dense_matrix(tr)
        c = np.exp(-5.0)
        assert T[0, 0] == -1.0
        assert T[0, 1] == pytest.approx(1.0 + c)
        assert T[0, 2] == pytest.approx(-c)
        D = toda.dense_matrix(di)
        assert (D[1, 1], D[1, 2], D[1, 3]) == (-1.0, 2.0, -1.0)

    def test_rows_sum_to_zero(self):
        for op in op_pair(12):
            T = toda.dense_matrix(op)
            assert np.max(np.abs(T[:-2].sum(axis=1))) < 1e-15


class TestApply:
    def test_constant_killed_where_band_fits(self):
        for op in op_pair(20):
            out = toda.apply(op, np.ones(20))
            assert np.max(np.abs(out[:-2])) < 1e-15
            assert out[-1] == -1.0  # truncated rows keep their deficit

    def test_zero_parameter_degenerates_to_bidiagonal(self):
        op = toda.TodaOperator(kind="translation", K=8, period=400.0)
        T = toda.dense_matrix(op)
        expect = -np.eye(8)
        expect[np.arange(7), np.arange(7) + 1] = 1.0
        assert T == pytest.approx(expect, abs=1e-300)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        for op in op_pair(40):
            x, y = rng.standard_normal((2, 40))
            lhs = toda.apply(op, 2.0 * x - 3.0 * y)
            rhs = 2.0 * toda.apply(op, x) - 3.0 * toda.apply(op, y)
            assert lhs == pytest.approx(rhs, abs=1e-13)

    def test_dimension_mismatch(self):
        op = toda.TodaOperator(kind="dilation", K=10)
        with pytest.raises(ValueError, match="levels"):
            toda.apply(op, np.ones(9))

    def test_weighted_seq_passthrough(self):
        op = toda.TodaOperator(kind="dilation", K=10)
        b = toda.WeightedSeq(entries=np.ones(10), tau=0.5)
        out = toda.apply(op, b)
        assert isinstance(out, toda.WeightedSeq) and out.tau == 0.5


class TestInvert:
    @pytest.mark.parametrize("K", [50, 200])
    def test_apply_invert_identity(self, K):
        rng = np.random.default_rng(11)
        for op in op_pair(K):
            b = rng.standard_normal(K)
            b /= toda.weighted_norm(b, 0.3)
            back = toda.apply(op, toda.invert(op, b))
            assert np.max(np.abs(back - b)) <= 1e-10

    def test_against_dense_solve(self):
        rng = np.random.default_rng(12)
        for op in op_pair(120):
            b = rng.standard_normal(120)
            x = toda.invert(op, b)
            dense = np.linalg.solve(toda.dense_matrix(op), b)
            assert np.max(np.abs(x - dense)) <= 1e-10

    def test_dilation_unit_mass_pattern(self):
        # mass at level k spreads linearly below it: x_j = -(k-j+1) for
        # j <= k, zero above; certified by the dense oracle above
        op = toda.TodaOperator(kind="dilation", K=12)
        b = np.zeros(12)
        b[5] = 1.0
        x = toda.invert(op, b)
        expect = np.where(np.arange(12) <= 5, -(5 - np.arange(12) + 1.0), 0.0)
        assert x == pytest.approx(expect, abs=1e-14)

    def test_vector_levels(self):
        rng = np.random.default_rng(13)
        op = toda.TodaOperator(kind="translation", K=40, period=2.0)
        b = rng.standard_normal((40, 5))
        x = toda.invert(op, b)
        assert np.max(np.abs(toda.apply(op, x) - b)) <= 1e-12

    def test_retags_tau(self):
        op = toda.TodaOperator(kind="dilation", K=10)
        b = toda.WeightedSeq(entries=np.ones(10), tau=0.5)
        assert toda.invert(op, b).tau == 0.5
        assert toda.invert(op, b, tau=0.2).tau == 0.2


class TestNorms:
    def test_single_term(self):
        e0 = np.zeros(8)
        e0[0] = 1.0
        assert toda.weighted_norm(e0, 0.5) == pytest.approx(np.exp(0.5))

    def test_homogeneity(self):
        rng = np.random.default_rng(5)
        b = rng.standard_normal(20)
        assert toda.weighted_norm(-2.5 * b, 0.4) == pytest.approx(
            2.5 * toda.weighted_norm(b, 0.4))

    def test_monotone_in_tau(self):
        b = np.abs(np.random.default_rng(6).standard_normal(20))
        assert toda.weighted_norm(b, 0.6) > toda.weighted_norm(b, 0.2)

    def test_vector_levels_use_sup(self):
        b = np.zeros((3, 4))
        b[1] = (0.0, -2.0, 1.0, 0.0)
        assert toda.weighted_norm(b, 0.5) == pytest.approx(2.0 * np.exp(1.5))


class TestAmplification:
    def test_sharp_on_aligned_sequence(self):
        tau = 0.3
        op = toda.TodaOperator(kind="translation", K=60, period=2.0)
        b = -np.exp(-(2 * np.arange(60) + 1) * tau)
        x = toda.invert(op, b)
        assert np.exp(tau) * abs(x[0]) == pytest.approx(
            toda.amplification(op, tau), rel=1e-13)

    def test_bounds_random_sequences(self):
        rng = np.random.default_rng(21)
        for op in op_pair(80):
            for tau in (0.1, 0.5):
                amp = toda.amplification(op, tau)
                for _ in range(20):
                    b = rng.standard_normal(80)
                    b /= toda.weighted_norm(b, tau)
                    assert toda.weighted_norm(toda.invert(op, b), tau) <= amp + 1e-12

    def test_gain_over_decay_shrinks_with_tau(self):
        # normalized by the e^{-2 tau} decay law, the worst-case gain at
        # tau = 0.5 sits below the tau = 0.1 one for both kinds
        for op in op_pair(200):
            r01 = toda.amplification(op, 0.1) / np.exp(-0.2)
            r05 = toda.amplification(op, 0.5) / np.exp(-1.0)
            assert r05 < r01
