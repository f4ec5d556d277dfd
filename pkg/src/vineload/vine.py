"""Rank dependence measures and regular-vine structures.

Features are numbered 1..d.  A vine is stored tree by tree; an edge of tree
``T_j`` records the two ``T_{j-1}`` nodes it joins (indices into the previous
tree's edge list, or feature indices for ``T_1``), from which the
conditioned pair and the conditioning set follow by set arithmetic.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import StructureInvalidError, UndefinedTauError


class DegenerateColumnWarning(UserWarning):
    pass


def pseudo_obs(samples) -> np.ndarray:
    """Column-wise ranks scaled by ``1/(n+1)``; ties get their average rank."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    for j in range(x.shape[1]):
        if np.all(x[:, j] == x[0, j]):
            warnings.warn(f"column {j + 1} is constant", DegenerateColumnWarning, stacklevel=2)
    return rankdata(x, method="average", axis=0) / (n + 1)


def kendall_tau(x, y, chunk: int = 2048) -> float:
    """Tie-corrected Kendall tau-b by enumerating all pairs.

    Rows are processed in blocks so memory stays at ``chunk * n``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    s = 0
    nx = 0
    ny = 0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dx = np.sign(x[start:stop, None] - x[None, :])
        dy = np.sign(y[start:stop, None] - y[None, :])
        s += int(np.sum(dx * dy))
        nx += int(np.count_nonzero(dx))
        ny += int(np.count_nonzero(dy))
    # every unordered pair was seen twice
    if nx == 0 or ny == 0:
        raise UndefinedTauError("Kendall tau is undefined for a constant vector")
    return float(s / np.sqrt(float(nx) * float(ny)))


def tau_matrix(samples) -> np.ndarray:
    """Pairwise Kendall tau of the columns; undefined entries are set to 0."""
    x = np.asarray(samples, dtype=np.float64)
    d = x.shape[1]
    tau = np.eye(d)
    for i, j in combinations(range(d), 2):
        try:
            t = kendall_tau(x[:, i], x[:, j])
        except UndefinedTauError:
            warnings.warn(f"tau({i + 1},{j + 1}) undefined, using 0", DegenerateColumnWarning,
                          stacklevel=2)
            t = 0.0
        tau[i, j] = tau[j, i] = t
    return tau


def gaussian_tau(sigma) -> np.ndarray:
    """Kendall tau of a multivariate normal: ``2/pi * arcsin(rho)``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    sd = np.sqrt(np.diag(sigma))
    rho = np.clip(sigma / np.outer(sd, sd), -1.0, 1.0)
    tau = 2.0 / np.pi * np.arcsin(rho)
    np.fill_diagonal(tau, 1.0)
    return tau


def _prim(weights: np.ndarray, allowed: np.ndarray | None = None) -> list[tuple[int, int]]:
    # maximum spanning tree; ties go to the lexicographically smallest (min, max) edge
    m = weights.shape[0]
    if allowed is None:
        allowed = ~np.eye(m, dtype=bool)
    in_tree = [0]
    edges = []
    while len(in_tree) < m:
        best = None
        for u in in_tree:
            for v in range(m):
                if v in in_tree or not allowed[u, v]:
                    continue
                key = (-weights[u, v], min(u, v), max(u, v))
                if best is None or key < best[0]:
                    best = (key, u, v)
        if best is None:
            raise StructureInvalidError("candidate graph is disconnected")
        _, u, v = best
        edges.append((min(u, v), max(u, v)))
        in_tree.append(v)
    return sorted(edges)


def first_tree_mst(tau_abs) -> list[tuple[int, int]]:
    """Maximum spanning tree of the complete graph weighted by ``|tau|``.

    Returns 1-based feature pairs ``(i, j)`` with ``i < j``.
    """
    w = np.abs(np.asarray(tau_abs, dtype=np.float64))
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weights must be a square matrix")
    return [(i + 1, j + 1) for i, j in _prim(w)]


@dataclass(frozen=True)
class VineEdge:
    conditioned: tuple[int, int]
    conditioning: tuple[int, ...]
    node_sets: tuple[frozenset, frozenset]
    nodes: tuple[int, int]

    @property
    def features(self) -> frozenset:
        return self.node_sets[0] | self.node_sets[1]

    def label(self) -> str:
        x, y = self.conditioned
        out = f"{x}{y}" if max(x, y) < 10 else f"{x},{y}"
        if self.conditioning:
            out += "|" + "".join(str(c) if c < 10 else f",{c}" for c in self.conditioning)
        return out

    def to_dict(self) -> dict:
        return {"conditioned": list(self.conditioned), "conditioning": list(self.conditioning)}


def edge_feature_pair(edge) -> frozenset:
    """Symmetric difference of the two node sets joined by ``edge``."""
    if isinstance(edge, VineEdge):
        s_v, s_w = edge.node_sets
    else:
        s_v, s_w = edge
    s_v, s_w = frozenset(s_v), frozenset(s_w)
    pair = (s_v | s_w) - (s_v & s_w)
    if len(pair) != 2:
        raise StructureInvalidError(f"node sets {set(s_v)} and {set(s_w)} do not form an edge")
    return pair


def _join(prev_sets: list[frozenset], a: int, b: int) -> VineEdge:
    s_v, s_w = prev_sets[a], prev_sets[b]
    only_v = s_v - s_w
    only_w = s_w - s_v
    if len(only_v) != 1 or len(only_w) != 1:
        raise StructureInvalidError(f"nodes {set(s_v)} and {set(s_w)} violate proximity")
    return VineEdge(
        (next(iter(only_v)), next(iter(only_w))),
        tuple(sorted(s_v & s_w)),
        (s_v, s_w),
        (a, b),
    )


@dataclass
class VineStructure:
    d: int
    trees: list[list[VineEdge]]

    @classmethod
    def from_node_pairs(cls, d: int, trees: list[list[tuple[int, int]]]) -> "VineStructure":
        """Build from 0-based node index pairs per tree."""
        prev = [frozenset([f]) for f in range(1, d + 1)]
        built = []
        for pairs in trees:
            tree = [_join(prev, a, b) for a, b in pairs]
            built.append(tree)
            prev = [e.features for e in tree]
        return cls(d, built)

    def labelled_edges(self):
        for i, tree in enumerate(self.trees, start=1):
            for j, edge in enumerate(tree, start=1):
                yield f"T{i},{j}", edge

    def describe(self) -> list[list[str]]:
        return [[e.label() for e in tree] for tree in self.trees]

    def to_dict(self) -> dict:
        return {"d": self.d, "trees": [[e.to_dict() for e in t] for t in self.trees]}

    @classmethod
    def from_dict(cls, data: dict) -> "VineStructure":
        d = int(data["d"]) if "d" in data else len(data["trees"]) + 1
        prev = [frozenset([f]) for f in range(1, d + 1)]
        trees = []
        for raw_tree in data["trees"]:
            lookup = {s: i for i, s in enumerate(prev)}
            tree = []
            for raw in raw_tree:
                x, y = (int(v) for v in raw["conditioned"])
                cond = frozenset(int(c) for c in raw.get("conditioning", []))
                a = lookup.get(cond | {x})
                b = lookup.get(cond | {y})
                if a is None or b is None:
                    raise StructureInvalidError(
                        f"edge {x}{y}|{sorted(cond)} has no matching nodes in the previous tree"
                    )
                tree.append(_join(prev, a, b))
            trees.append(tree)
            prev = [e.features for e in tree]
        vine = cls(d, trees)
        validate_vine(vine)
        return vine

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "VineStructure":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _is_spanning_tree(n_nodes: int, pairs: list[tuple[int, int]]) -> bool:
    parent = list(range(n_nodes))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    if len(pairs) != n_nodes - 1:
        return False
    for a, b in pairs:
        if not (0 <= a < n_nodes and 0 <= b < n_nodes):
            return False
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def validate_vine(vine: VineStructure) -> None:
    """Raise ``StructureInvalidError`` unless every regular-vine condition holds."""
    d = vine.d
    if d < 2:
        raise StructureInvalidError("a vine needs at least two features")
    if len(vine.trees) != d - 1:
        raise StructureInvalidError(f"expected {d - 1} trees, got {len(vine.trees)}")
    prev_sets = [frozenset([f]) for f in range(1, d + 1)]
    prev_nodes: list[tuple[int, int]] | None = None
    for j, tree in enumerate(vine.trees, start=1):
        if len(tree) != d - j:
            raise StructureInvalidError(f"tree {j} has {len(tree)} edges, expected {d - j}")
        for e in tree:
            a, b = e.nodes
            if not (0 <= a < len(prev_sets) and 0 <= b < len(prev_sets)) or a == b:
                raise StructureInvalidError(f"tree {j} edge {e.label()} has bad node indices")
            if (prev_sets[a], prev_sets[b]) != e.node_sets:
                raise StructureInvalidError(f"tree {j} edge {e.label()} node sets inconsistent")
            if prev_nodes is not None and not set(prev_nodes[a]) & set(prev_nodes[b]):
                raise StructureInvalidError(f"tree {j} edge {e.label()} violates proximity")
            if frozenset(e.conditioned) != edge_feature_pair(e):
                raise StructureInvalidError(f"tree {j} edge {e.label()} conditioned pair wrong")
            if frozenset(e.conditioning) != e.node_sets[0] & e.node_sets[1]:
                raise StructureInvalidError(f"tree {j} edge {e.label()} conditioning set wrong")
        if not _is_spanning_tree(len(prev_sets), [e.nodes for e in tree]):
            raise StructureInvalidError(f"tree {j} is not a spanning tree of its nodes")
        prev_nodes = [e.nodes for e in tree]
        prev_sets = [e.features for e in tree]


def _check_perm(order, d: int | None = None) -> list[int]:
    order = [int(v) for v in order]
    d = len(order) if d is None else d
    if sorted(order) != list(range(1, d + 1)):
        raise ValueError(f"{order} is not a permutation of 1..{d}")
    return order


def build_dvine(order) -> VineStructure:
    """D-vine whose first tree is the path through ``order``."""
    order = _check_perm(order)
    d = len(order)
    trees = [[(order[i] - 1, order[i + 1] - 1) for i in range(d - 1)]]
    for j in range(2, d):
        trees.append([(i, i + 1) for i in range(d - j)])
    vine = VineStructure.from_node_pairs(d, trees)
    validate_vine(vine)
    return vine


def build_cvine(root_order, d: int | None = None) -> VineStructure:
    """C-vine: tree ``j`` is a star centred on the node carrying ``root_order[j]``.

    ``root_order`` may list fewer than ``d`` features; the rest follow in
    ascending order.
    """
    roots = [int(v) for v in root_order]
    d = d if d is not None else max(len(roots) + 1, max(roots, default=1))
    roots += [f for f in range(1, d + 1) if f not in roots]
    _check_perm(roots, d)
    prev_sets = [frozenset([f]) for f in range(1, d + 1)]
    trees = []
    for j in range(1, d):
        root = roots[j - 1]
        if j == 1:
            hub = root - 1
        else:
            # the star edge of the previous tree whose free end is this root
            hub = next(i for i, s in enumerate(prev_sets) if root in s and roots[j - 2] in s)
        pairs = [(hub, i) for i in range(len(prev_sets)) if i != hub]
        trees.append(pairs)
        prev_sets = [prev_sets[a] | prev_sets[b] for a, b in pairs]
    vine = VineStructure.from_node_pairs(d, trees)
    validate_vine(vine)
    return vine


def dvine_order_from_tau(tau) -> list[int]:
    """Greedy path through the features maximising adjacent ``|tau|``."""
    w = np.abs(np.asarray(tau, dtype=np.float64))
    d = w.shape[0]
    if d < 2:
        raise ValueError("need at least two features")
    best = max(combinations(range(d), 2), key=lambda p: (w[p], -p[0], -p[1]))
    path = list(best)
    left = [f for f in range(d) if f not in path]
    while left:
        cands = []
        for f in left:
            cands.append((w[path[0], f], -f, 0))
            cands.append((w[path[-1], f], -f, -1))
        _, neg_f, end = max(cands)
        if end == 0:
            path.insert(0, -neg_f)
        else:
            path.append(-neg_f)
        left.remove(-neg_f)
    return [f + 1 for f in path]


def dvine_order(samples) -> list[int]:
    return dvine_order_from_tau(tau_matrix(samples))


def rvine_from_tau(tau) -> VineStructure:
    """Tree-by-tree maximum spanning trees under the proximity condition.

    Higher trees weight a candidate edge by the unconditional ``|tau|`` of its
    conditioned pair.
    """
    w = np.abs(np.asarray(tau, dtype=np.float64))
    d = w.shape[0]
    trees = [[(i - 1, j - 1) for i, j in first_tree_mst(w)]]
    prev_sets = [frozenset([f]) for f in range(1, d + 1)]
    prev_sets = [prev_sets[a] | prev_sets[b] for a, b in trees[0]]
    prev_pairs = trees[0]
    for _ in range(2, d):
        m = len(prev_pairs)
        allowed = np.zeros((m, m), dtype=bool)
        weights = np.zeros((m, m))
        for a, b in combinations(range(m), 2):
            if set(prev_pairs[a]) & set(prev_pairs[b]):
                allowed[a, b] = allowed[b, a] = True
                x, y = prev_sets[a] ^ prev_sets[b]
                weights[a, b] = weights[b, a] = w[x - 1, y - 1]
        pairs = _prim(weights, allowed)
        trees.append(pairs)
        prev_sets = [prev_sets[a] | prev_sets[b] for a, b in pairs]
        prev_pairs = pairs
    vine = VineStructure.from_node_pairs(d, trees)
    validate_vine(vine)
    return vine


def build_rvine_greedy(samples) -> VineStructure:
    return rvine_from_tau(tau_matrix(pseudo_obs(samples)))
