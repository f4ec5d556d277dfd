"""Dynamical Lie algebra closure for small real circuits.

Every RY and CRY gate is ``exp(theta/2 * G)`` for a real skew-symmetric
generator ``G``; the closure of those generators under commutators bounds
which orthogonal transformations the circuit family can reach.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import ansatz
from .statevec import CRY, Circuit

MAX_QUBITS = 6
RANK_TOL = 1e-9
SKEW_TOL = 1e-12

CLOSED = "closed"
MAX_DIM_EXCEEDED = "max_dim_exceeded"

_MINUS_I_Y = np.array([[0.0, -1.0], [1.0, 0.0]])
_P1 = np.array([[0.0, 0.0], [0.0, 1.0]])


def so_dim(m: int) -> int:
    """Dimension of so(2^m)."""
    n = 1 << m
    return n * (n - 1) // 2


def _embed(mats: dict[int, np.ndarray], m: int) -> np.ndarray:
    # qubit 1 is the leftmost Kronecker factor (most significant bit)
    out = np.ones((1, 1))
    for q in range(1, m + 1):
        out = np.kron(out, mats.get(q, np.eye(2)))
    return out


def y_generator(target: int, m: int) -> np.ndarray:
    return _embed({target: _MINUS_I_Y}, m)


def cy_generator(control: int, target: int, m: int) -> np.ndarray:
    return _embed({control: _P1, target: _MINUS_I_Y}, m)


@dataclass
class GeneratorSet:
    m: int
    matrices: list[np.ndarray]
    labels: list[str]

    def __post_init__(self) -> None:
        if not 1 <= self.m <= MAX_QUBITS:
            raise ValueError(f"m must lie in 1..{MAX_QUBITS}, got {self.m}")
        if len(self.matrices) != len(self.labels):
            raise ValueError("one label per generator")
        n = 1 << self.m
        for g, lab in zip(self.matrices, self.labels):
            if g.shape != (n, n):
                raise ValueError(f"generator {lab} has shape {g.shape}, expected {(n, n)}")
            if np.max(np.abs(g + g.T)) > SKEW_TOL:
                raise ValueError(f"generator {lab} is not skew-symmetric")

    @classmethod
    def from_circuit(cls, circuit: Circuit) -> "GeneratorSet":
        """One generator per distinct gate position of ``circuit``."""
        seen: dict[tuple, None] = {}
        for op in circuit.ops:
            seen.setdefault((op.kind, op.control, op.target), None)
        mats, labels = [], []
        for kind, control, target in seen:
            if kind == CRY:
                mats.append(cy_generator(control, target, circuit.n_qubits))
                labels.append(f"CY{control}{target}")
            else:
                mats.append(y_generator(target, circuit.n_qubits))
                labels.append(f"Y{target}")
        return cls(circuit.n_qubits, mats, labels)

    def reordered(self, order) -> "GeneratorSet":
        return GeneratorSet(self.m, [self.matrices[i] for i in order], [self.labels[i] for i in order])


@dataclass
class ClosureResult:
    dimension: int
    basis: np.ndarray  # shape (dimension, 2^m, 2^m), orthonormal in the Frobenius product
    status: str

    @property
    def closed(self) -> bool:
        return self.status == CLOSED


def lie_closure(gens: GeneratorSet, max_dim: int | None = None) -> ClosureResult:
    """Real span of all nested commutators of ``gens``.

    New directions are found by commuting each fresh basis element with every
    generator; that suffices because nested commutators of generators already
    span the algebra.  Stops early at ``so(2^m)`` since skew-symmetric matrices
    cannot span more.
    """
    n = 1 << gens.m
    cap = so_dim(gens.m)
    limit = cap if max_dim is None else min(max_dim, cap)
    basis = np.zeros((min(limit, cap) + 1, n * n))
    dim = 0

    def add(mat: np.ndarray) -> bool:
        nonlocal dim
        v = mat.ravel()
        norm = np.linalg.norm(v)
        if norm < RANK_TOL:
            return False
        v = v / norm
        for _ in range(2):  # classical Gram-Schmidt, repeated once for stability
            v = v - basis[:dim].T @ (basis[:dim] @ v)
        r = np.linalg.norm(v)
        if r <= RANK_TOL:
            return False
        basis[dim] = v / r
        dim += 1
        return True

    status = CLOSED
    frontier = 0
    for g in gens.matrices:
        if dim == limit:
            if add(g):
                dim -= 1
                status = MAX_DIM_EXCEEDED
                break
            continue
        add(g)
    gmats = gens.matrices
    while status == CLOSED and frontier < dim and dim < cap:
        h = basis[frontier].reshape(n, n)
        frontier += 1
        for g in gmats:
            c = g @ h - h @ g
            if dim == limit:
                if add(c):
                    dim -= 1
                    status = MAX_DIM_EXCEEDED
                    break
                continue
            add(c)
            if dim == cap:
                break
    out = basis[:dim].reshape(dim, n, n).copy()
    return ClosureResult(dim, out, status)


def ring_generators(kappa: int) -> GeneratorSet:
    return GeneratorSet.from_circuit(ansatz.build_sorb(1, kappa, 1))


def univariate_generators(k: int) -> GeneratorSet:
    circ, _ = ansatz.build_univariate(1, k, 1)
    return GeneratorSet.from_circuit(circ)


def beb_generators(k: int) -> GeneratorSet:
    return GeneratorSet.from_circuit(ansatz.build_beb(1, 2, k, 1))


@dataclass
class TheoremCheck:
    name: str
    m: int
    expected: int
    found: int | None
    status: str
    seconds: float

    @property
    def ok(self) -> bool:
        return self.found == self.expected

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ok"] = self.ok
        return out


def verify_theorems(k: int, include_large: bool = False) -> list[TheoremCheck]:
    """Closure dimensions for the ring, hierarchical and bivariate generator sets.

    Rings are checked for every width up to ``min(k, 3)``, the hierarchical
    univariate set at width ``k`` and the bivariate block on two ``k``-qubit
    registers.  The 6-qubit bivariate case only runs with ``include_large``.
    """
    if k < 1 or 2 * k > MAX_QUBITS:
        raise ValueError(f"k must satisfy 1 <= k and 2k <= {MAX_QUBITS}")
    jobs = [(f"ring kappa={c}", lambda c=c: ring_generators(c), c) for c in range(1, min(k, 3) + 1)]
    jobs.append((f"univariate k={k}", lambda: univariate_generators(k), k))
    jobs.append((f"beb k={k}", lambda: beb_generators(k), 2 * k))
    rows = []
    for name, make, m in jobs:
        if m > 4 and not include_large:
            rows.append(TheoremCheck(name, m, so_dim(m), None, "skipped", 0.0))
            continue
        t0 = time.perf_counter()
        res = lie_closure(make())
        rows.append(TheoremCheck(name, m, so_dim(m), res.dimension, res.status,
                                 time.perf_counter() - t0))
    return rows


def format_report(rows: list[TheoremCheck]) -> str:
    lines = [f"{'check':<18} {'m':>2} {'expected':>8} {'found':>6}  result"]
    for r in rows:
        found = "-" if r.found is None else str(r.found)
        verdict = "skipped" if r.found is None else ("PASS" if r.ok else "FAIL")
        lines.append(f"{r.name:<18} {r.m:>2} {r.expected:>8} {found:>6}  {verdict}")
    return "\n".join(lines)
