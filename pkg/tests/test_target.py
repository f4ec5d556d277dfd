import math

import numpy as np
import pytest

from vineload.errors import DataError, LengthMismatchError
from vineload.target import (
    DiscreteDistribution,
    SampleSet,
    coarsen,
    discretize,
    gaussian_target,
    log_returns,
    marginal,
    read_price_csv,
    target_amplitudes,
    tvd,
)

SIGMA_3D = [[0.05, 0.03, 0.015], [0.03, 0.05, -0.01], [0.015, -0.01, 0.05]]
SIGMA_4D = [
    [0.05, 0.03, 0.015, 0.01],
    [0.03, 0.05, -0.01, 0.02],
    [0.015, -0.01, 0.05, 0.025],
    [0.01, 0.02, 0.025, 0.05],
]


def loop_histogram(x, edges, k):
    """Per-sample bin search, one feature at a time."""
    nb = 1 << k
    counts = np.zeros(1 << (k * x.shape[1]))
    for row in x:
        code = 0
        for r, e in enumerate(edges):
            b = next((l for l in range(nb) if e[l] <= row[r] < e[l + 1]), nb - 1)
            code = code * nb + b
        counts[code] += 1
    return counts / counts.sum()


def normal_table_1d(mu, var, k, lo, hi):
    e = np.linspace(lo, hi, (1 << k) + 1)
    c = 0.5 * (e[:-1] + e[1:])
    p = np.exp(-0.5 * (c - mu) ** 2 / var)
    return p / p.sum()


class TestDiscretize:
    def test_single_sample(self):
        dist = discretize([[0.3, -2.0]], 2)
        assert np.count_nonzero(dist.probs) == 1
        assert dist.probs.max() == 1.0

    def test_two_extremes(self):
        assert np.array_equal(discretize([[0.0], [1.0]], 1).probs, [0.5, 0.5])

    def test_histogram_oracle(self):
        x = np.random.default_rng(0).normal(size=(1000, 1))
        dist = discretize(x, 3)
        assert np.array_equal(dist.probs, loop_histogram(x, dist.edges, 3))

    def test_histogram_oracle_3d(self):
        x = np.random.default_rng(1).normal(size=(500, 3))
        dist = discretize(x, 2)
        assert np.array_equal(dist.probs, loop_histogram(x, dist.edges, 2))

    def test_padding(self):
        dist = discretize([[0.0], [10.0]], 2, range_pad=0.01)
        assert dist.edges[0][0] == pytest.approx(-0.1)
        assert dist.edges[0][-1] == pytest.approx(10.1)
        assert np.allclose(np.diff(dist.edges[0]), dist.width()[0])

    def test_feature_one_is_most_significant(self):
        # feature 1 high, feature 2 low -> code 10 in binary for k=1
        dist = discretize([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]], 1)
        assert dist.probs[2] == pytest.approx(1 / 3)
        assert dist.probs[0] == pytest.approx(1 / 3)
        assert dist.probs[1] == pytest.approx(1 / 3)

    def test_permutation_equivariant(self):
        x = np.random.default_rng(2).normal(size=(300, 3))
        perm = [2, 0, 1]
        a = discretize(x, 2).table()
        b = discretize(x[:, perm], 2).table()
        assert np.array_equal(np.transpose(a, perm), b)

    def test_quantile_policy(self):
        x = np.random.default_rng(3).normal(size=(800, 1))
        dist = discretize(x, 2, policy="quantile")
        assert np.allclose(dist.probs, 0.25, atol=0.01)

    def test_missing_rejected(self):
        with pytest.raises(DataError):
            SampleSet(np.array([[1.0], [np.nan]]))


class TestGaussian:
    def test_diagonal_factorises(self):
        g = gaussian_target([0.05] * 3, np.eye(3) * 0.25, 3)
        m = [marginal(g, [r]).probs for r in (1, 2, 3)]
        assert np.max(np.abs(np.einsum("i,j,k->ijk", *m).ravel() - g.probs)) <= 1e-12
        one = normal_table_1d(0.05, 0.25, 3, 0.05 - 1.5, 0.05 + 1.5)
        assert np.allclose(m[0], one, atol=1e-12)

    def test_default_range(self):
        g = gaussian_target([0.05] * 3, SIGMA_3D, 3)
        sd = math.sqrt(0.05)
        assert g.edges[0][0] == pytest.approx(0.05 - 3 * sd)
        assert g.edges[2][-1] == pytest.approx(0.05 + 3 * sd)

    def test_correlated_marginal_close_to_1d(self):
        g = gaussian_target([0.05] * 3, SIGMA_3D, 3)
        sd = math.sqrt(0.05)
        one = normal_table_1d(0.05, 0.05, 3, 0.05 - 3 * sd, 0.05 + 3 * sd)
        # the joint grid clips the other coordinates at 3 sd, which reweights slightly
        assert tvd(marginal(g, [1]).probs, one) < 5e-3

    def test_4d_matrix_accepted(self):
        g = gaussian_target([0.05] * 4, SIGMA_4D, 3)
        assert g.probs.shape == (4096,)
        assert SIGMA_4D[3] == [0.01, 0.02, 0.025, 0.05]

    def test_positive_correlation_visible(self):
        g = marginal(gaussian_target([0.05] * 3, SIGMA_3D, 3), [1, 2]).table()
        c = np.arange(8) - 3.5
        assert np.sum(g * np.outer(c, c)) > 0

    def test_non_pd_rejected(self):
        with pytest.raises(DataError):
            gaussian_target([0, 0], [[1, 2], [2, 1]], 2)
        with pytest.raises(DataError):
            gaussian_target([0, 0], [[1, 0.5], [0.4, 1]], 2)


class TestAmplitudesAndMarginals:
    def test_uniform(self):
        d = DiscreteDistribution(1, 2, np.full(4, 0.25), [np.linspace(0, 1, 5)])
        assert np.allclose(target_amplitudes(d), 0.5)

    def test_point_mass(self):
        p = np.zeros(8)
        p[5] = 1
        d = DiscreteDistribution(1, 3, p, [np.linspace(0, 1, 9)])
        assert np.array_equal(target_amplitudes(d), p)

    def test_roundtrip(self):
        p = np.random.default_rng(4).random(64)
        d = DiscreteDistribution(2, 3, p / p.sum(), [np.linspace(0, 1, 9)] * 2)
        assert np.max(np.abs(target_amplitudes(d) ** 2 - d.probs)) <= 1e-12
        assert abs(np.linalg.norm(target_amplitudes(d)) - 1) <= 1e-10

    def test_full_subset_identity(self):
        g = gaussian_target([0] * 3, SIGMA_3D, 2)
        assert np.array_equal(marginal(g, [1, 2, 3]).probs, g.probs)

    def test_reordered_subset(self):
        g = gaussian_target([0] * 3, SIGMA_3D, 2)
        assert np.allclose(marginal(g, [2, 1]).table(), marginal(g, [1, 2]).table().T)

    def test_marginal_composes(self):
        p = np.random.default_rng(5).random(1 << 8)
        d = DiscreteDistribution(4, 2, p / p.sum(), [np.linspace(0, 1, 5)] * 4)
        once = marginal(d, [3, 4]).probs
        twice = marginal(marginal(d, [2, 3, 4]), [2, 3]).probs
        assert np.allclose(once, twice, atol=1e-15)

    def test_coarsen(self):
        assert np.array_equal(coarsen([0.1, 0.2, 0.3, 0.4], 2, 1), [0.1 + 0.2, 0.3 + 0.4])
        assert np.array_equal(coarsen([0.1, 0.2, 0.3, 0.4], 2, 2), [0.1, 0.2, 0.3, 0.4])

    def test_export(self, tmp_path):
        g = gaussian_target([0] * 2, [[1, 0.3], [0.3, 1]], 2)
        g.to_csv(tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "bitstring,probability"
        assert lines[1].split(",")[0] == "0000"
        back = np.array([float(l.split(",")[1]) for l in lines[1:]])
        assert np.array_equal(back, g.probs)
        g.to_json(tmp_path / "d.json")
        import json

        again = DiscreteDistribution.from_dict(json.loads((tmp_path / "d.json").read_text()))
        assert np.array_equal(again.probs, g.probs)
        assert all(np.array_equal(a, b) for a, b in zip(again.edges, g.edges))


class TestTvd:
    def test_examples(self):
        assert tvd([0.3, 0.7], [0.3, 0.7]) == 0
        assert tvd([1, 0], [0, 1]) == 1
        assert tvd([1, 0], [0.5, 0.5]) == 0.5

    def test_length(self):
        with pytest.raises(LengthMismatchError):
            tvd([1.0], [0.5, 0.5])

    def test_metric(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            p, q, r = (v / v.sum() for v in rng.random((3, 16)))
            assert tvd(p, q) == pytest.approx(tvd(q, p))
            assert tvd(p, r) <= tvd(p, q) + tvd(q, r) + 1e-15
            assert 0 <= tvd(p, q) <= 1


class TestReturns:
    def test_constant(self):
        assert np.array_equal(log_returns(np.full((5, 2), 3.0)).data, np.zeros((4, 2)))

    def test_doubling(self):
        assert log_returns([1.0, 2.0]).data[0, 0] == pytest.approx(0.6931, abs=1e-4)

    def test_length(self):
        p = np.exp(np.cumsum(np.random.default_rng(7).normal(0, 0.01, (1025, 3)), axis=0))
        assert len(log_returns(p)) == 1024

    def test_non_positive(self):
        with pytest.raises(DataError):
            log_returns([1.0, 0.0, 2.0])

    def test_csv(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("date,SPY,AMD\n2024-01-02,100,50\n2024-01-03,101,49.5\n")
        dates, tickers, prices = read_price_csv(path)
        assert tickers == ["SPY", "AMD"]
        assert str(dates[1]) == "2024-01-03"
        assert prices.shape == (2, 2)

    @pytest.mark.parametrize(
        "body,msg",
        [
            ("date,A\n2024-01-02,1\n2024-01-03,\n", ":3: missing"),
            ("date,A\n2024-01-03,1\n2024-01-02,2\n", ":3: dates"),
            ("date,A\n2024-13-02,1\n", ":2: bad date"),
            ("date,A\n2024-01-02,-1\n", ":2: non-positive"),
            ("day,A\n2024-01-02,1\n", ":1: header"),
            ("date,A,B\n2024-01-02,1\n", ":2: expected 3"),
        ],
    )
    def test_csv_errors(self, tmp_path, body, msg):
        path = tmp_path / "bad.csv"
        path.write_text(body)
        with pytest.raises(DataError, match=msg):
            read_price_csv(path)


def test_table_width_capped():
    from vineload.errors import CapacityError

    with pytest.raises(CapacityError):
        gaussian_target([0.0] * 9, np.eye(9), 3)
    with pytest.raises(CapacityError):
        discretize(np.zeros((2, 14)), 2)
