import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kendalltau

from vineload.errors import StructureInvalidError, UndefinedTauError
from vineload.vine import (
    DegenerateColumnWarning,
    VineStructure,
    build_cvine,
    build_dvine,
    build_rvine_greedy,
    dvine_order,
    dvine_order_from_tau,
    edge_feature_pair,
    first_tree_mst,
    gaussian_tau,
    kendall_tau,
    pseudo_obs,
    rvine_from_tau,
    validate_vine,
)

from oracles import all_spanning_trees, check_vine, kendall_bruteforce


def labels(vine):
    return vine.describe()


class TestPseudoObs:
    def test_ranks(self):
        assert np.allclose(pseudo_obs([[3], [1], [2]]).ravel(), [0.75, 0.25, 0.5])

    def test_monotone_grid(self):
        u = pseudo_obs(np.exp(np.arange(9.0))[:, None]).ravel()
        assert np.allclose(u, np.arange(1, 10) / 10)

    def test_ties(self):
        assert np.allclose(pseudo_obs([[1], [1], [2]]).ravel(), [0.375, 0.375, 0.75])

    def test_constant_column_flagged(self):
        with pytest.warns(DegenerateColumnWarning):
            u = pseudo_obs([[1.0, 2.0], [1.0, 3.0]])
        assert np.allclose(u[:, 0], [0.5, 0.5])


class TestKendall:
    def test_identity(self):
        x = np.random.default_rng(0).normal(size=20)
        assert kendall_tau(x, x) == pytest.approx(1.0)
        assert kendall_tau(x, -x) == pytest.approx(-1.0)

    def test_small_example(self):
        assert kendall_tau([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(1 / 3, abs=1e-15)
        assert kendall_bruteforce([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(1 / 3)

    def test_constant(self):
        with pytest.raises(UndefinedTauError):
            kendall_tau([1, 1, 1], [1, 2, 3])

    def test_matches_scipy_with_ties(self):
        rng = np.random.default_rng(1)
        x = rng.integers(0, 5, 60)
        y = rng.integers(0, 5, 60)
        assert kendall_tau(x, y) == pytest.approx(kendalltau(x, y).statistic, abs=1e-12)

    def test_chunking_invariant(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(2, 301))
        assert kendall_tau(x, y, chunk=7) == pytest.approx(kendall_tau(x, y), abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=3, max_size=25))
    def test_properties(self, pts):
        x = np.array([p[0] for p in pts], dtype=float)
        y = np.array([p[1] for p in pts], dtype=float)
        if np.all(x == x[0]) or np.all(y == y[0]):
            return
        t = kendall_tau(x, y)
        assert -1 - 1e-12 <= t <= 1 + 1e-12
        assert t == pytest.approx(kendall_tau(y, x), abs=1e-12)
        assert t == pytest.approx(kendall_tau(np.exp(x), y ** 3), abs=1e-12)
        assert t == pytest.approx(kendall_bruteforce(x, y), abs=1e-12)

    def test_gaussian_tau(self):
        tau = gaussian_tau([[1.0, 0.5], [0.5, 1.0]])
        assert tau[0, 1] == pytest.approx(2 / np.pi * np.arcsin(0.5))
        assert np.allclose(gaussian_tau(np.eye(3) * 0.25), np.eye(3))


def best_tree_weight(w):
    m = w.shape[0]
    return max(sum(w[a, b] for a, b in t) for t in all_spanning_trees(m))


class TestMst:
    def test_d2(self):
        assert first_tree_mst(np.array([[0, 0.3], [0.3, 0]])) == [(1, 2)]

    def test_hub(self):
        w = np.full((4, 4), 0.1)
        w[2, :] = w[:, 2] = 0.9
        np.fill_diagonal(w, 0)
        assert first_tree_mst(w) == [(1, 3), (2, 3), (3, 4)]
        assert sum(w[a - 1, b - 1] for a, b in first_tree_mst(w)) == pytest.approx(best_tree_weight(w))

    def test_cayley_d5(self):
        assert sum(1 for _ in all_spanning_trees(5)) == 125
        rng = np.random.default_rng(3)
        w = rng.random((5, 5))
        w = (w + w.T) / 2
        np.fill_diagonal(w, 0)
        got = sum(w[a - 1, b - 1] for a, b in first_tree_mst(w))
        assert got == pytest.approx(best_tree_weight(w), abs=1e-12)

    def test_ties_deterministic(self):
        w = np.ones((4, 4)) - np.eye(4)
        assert first_tree_mst(w) == [(1, 2), (1, 3), (1, 4)]


class TestStructures:
    def test_dvine_fig(self):
        v = build_dvine([1, 2, 3, 4])
        assert labels(v) == [["12", "23", "34"], ["13|2", "24|3"], ["14|23"]]

    def test_dvine_d2(self):
        v = build_dvine([1, 2])
        assert labels(v) == [["12"]]

    def test_dvine_reversed(self):
        assert labels(build_dvine([3, 2, 1])) == [["32", "21"], ["31|2"]]

    def test_cvine(self):
        assert labels(build_cvine([1, 2])) == [["12", "13"], ["23|1"]]
        assert labels(build_cvine([1], d=2)) == labels(build_dvine([1, 2]))
        assert labels(build_cvine([2, 1, 3])) == [["21", "23", "24"], ["13|2", "14|2"], ["34|12"]]

    def test_dvine_cvine_differ_d4(self):
        assert labels(build_dvine([1, 2, 3, 4]))[0] != labels(build_cvine([1, 2, 3]))[0]

    def test_bad_permutation(self):
        with pytest.raises(ValueError):
            build_dvine([1, 1, 2])

    def test_edge_feature_pair(self):
        assert edge_feature_pair(({1, 2}, {2, 3})) == {1, 3}
        assert edge_feature_pair(({1}, {2})) == {1, 2}
        assert edge_feature_pair(({1, 2, 3}, {2, 3, 4})) == {1, 4}
        with pytest.raises(StructureInvalidError):
            edge_feature_pair(({1, 2}, {3, 4}))

    def test_edge_pairs_match_labels(self):
        v = build_dvine([2, 4, 1, 3])
        for _, e in v.labelled_edges():
            assert edge_feature_pair(e) == set(e.conditioned)

    def test_rvine_d3_forced(self):
        w = np.array([[0, 0.8, 0.1], [0.8, 0, 0.5], [0.1, 0.5, 0]])
        v = rvine_from_tau(w)
        assert labels(v) == [["12", "23"], ["13|2"]]

    def test_rvine_star_t2_through_hub(self):
        w = np.full((4, 4), 0.05)
        w[0, :] = w[:, 0] = 0.9
        np.fill_diagonal(w, 0)
        v = rvine_from_tau(w)
        assert labels(v)[0] == ["12", "13", "14"]
        assert all(e.conditioning == (1,) for e in v.trees[1])

    def test_rvine_from_independent_samples(self):
        x = np.random.default_rng(4).normal(size=(200, 5))
        v = build_rvine_greedy(x)
        check_vine(v)
        assert sum(len(t) for t in v.trees) == 10

    def test_dvine_order(self):
        assert dvine_order(np.random.default_rng(5).normal(size=(30, 2))) == [1, 2]
        tau = np.array([[1, 0.7, 0.1], [0.7, 1, 0.6], [0.1, 0.6, 1]])
        order = dvine_order_from_tau(tau)
        assert order[1] == 2

    def test_dvine_order_recovers_chain(self):
        rng = np.random.default_rng(6)
        n = 400
        a = rng.normal(size=n)
        b = a + 0.4 * rng.normal(size=n)
        c = b + 0.4 * rng.normal(size=n)
        e = c + 0.4 * rng.normal(size=n)
        x = np.column_stack([c, a, e, b])  # chain a - b - c - e
        order = dvine_order(x)
        tau = np.abs(np.array([[kendall_tau(x[:, i], x[:, j]) for j in range(4)] for i in range(4)]))

        def score(o):
            return sum(tau[o[i] - 1, o[i + 1] - 1] for i in range(3))

        best = max(itertools.permutations(range(1, 5)), key=score)
        assert score(order) == pytest.approx(score(best))
        assert order in ([2, 4, 1, 3], [3, 1, 4, 2])

    def test_json_roundtrip(self, tmp_path):
        for v in (build_dvine([2, 3, 1, 4]), build_cvine([3, 1, 2]), rvine_from_tau(gaussian_tau(
                [[1, 0.5, 0.2, 0.1], [0.5, 1, 0.3, 0.2], [0.2, 0.3, 1, 0.6], [0.1, 0.2, 0.6, 1]]))):
            path = tmp_path / "vine.json"
            v.to_json(path)
            back = VineStructure.from_json(path)
            assert labels(back) == labels(v)
            assert back.trees == v.trees

    def test_json_rejects_invalid(self):
        bad = {"d": 3, "trees": [[{"conditioned": [1, 2]}, {"conditioned": [2, 3]}],
                                 [{"conditioned": [1, 2], "conditioning": [3]}]]}
        with pytest.raises(StructureInvalidError):
            VineStructure.from_dict(bad)

    def test_validator_catches_cycle(self):
        # T1 = 12, 23, 13 closes a cycle and leaves feature 4 isolated
        v = VineStructure.from_node_pairs(4, [[(0, 1), (1, 2), (0, 2)], [(0, 1), (1, 2)]])
        v.trees.append([v.trees[1][0]])
        with pytest.raises(StructureInvalidError, match="tree 1 is not a spanning tree"):
            validate_vine(v)

    def test_random_structures_valid(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            d = int(rng.integers(2, 8))
            w = rng.random((d, d))
            w = (w + w.T) / 2
            perm = list(rng.permutation(d) + 1)
            for v in (rvine_from_tau(w), build_dvine(perm), build_cvine(perm[:-1])):
                check_vine(v)
                validate_vine(v)
                assert sum(len(t) for t in v.trees) == d * (d - 1) // 2

    def test_constant_columns_tau_zero(self):
        x = np.column_stack([np.ones(10), np.arange(10.0), np.arange(10.0) ** 2])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateColumnWarning)
            v = build_rvine_greedy(x)
        check_vine(v)
