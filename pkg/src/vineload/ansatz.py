"""Circuit blocks of the vine ansatz and their resource accounting.

Three block types are built here, all from RY and CRY gates only:

* the ring block on ``kappa`` consecutive qubits (a ring of CRYs followed by
  one RY per qubit),
* the hierarchical univariate circuit, a sequence of ring blocks on the
  leading 1, 2, ..., k qubits of a feature register,
* the bivariate entangling block (BEB) joining two feature registers.

Parameter slots are handed out sequentially in construction order, so a
progressively grown circuit can freeze everything below an index.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .statevec import CRY, RY, Circuit, GateOp

SORB = "SORB"
UNIVARIATE = "UNIVARIATE"
BEB = "BEB"


@dataclass(frozen=True)
class BlockSpec:
    kind: str
    registers: tuple[int, ...]
    k: int
    layers: int

    def __post_init__(self) -> None:
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.kind == BEB and (len(self.registers) != 2 or self.registers[0] == self.registers[1]):
            raise ValueError(f"BEB needs two distinct registers, got {self.registers}")


def first_qubit(register: int, k: int) -> int:
    return k * (register - 1) + 1


def sorb_layer_size(kappa: int) -> int:
    return 2 * kappa if kappa >= 2 else 1


def _sorb_layer_ops(r1: int, kappa: int, offset: int) -> list[GateOp]:
    if kappa == 1:
        return [GateOp(RY, r1, offset)]
    chain = [
        GateOp(CRY, r1 + j + 1, offset + j, control=r1 + j) for j in range(kappa - 1)
    ]
    ops = chain[0::2] + chain[1::2]
    ops.append(GateOp(CRY, r1, offset + kappa - 1, control=r1 + kappa - 1))
    ops.extend(GateOp(RY, r1 + j, offset + kappa + j) for j in range(kappa))
    return ops


def build_sorb(
    r1: int, kappa: int, layers: int, param_offset: int = 0, n_qubits: int | None = None
) -> Circuit:
    """Ring block on qubits ``r1 .. r1+kappa-1`` repeated ``layers`` times.

    Per layer the chain CRYs on even pairs are applied first, then the odd
    pairs, then the wrap-around CRY from the last qubit back to ``r1``, then
    one RY per qubit.  Slots within a layer follow the generator order: chain
    CRYs, wrap CRY, RYs.  With ``kappa == 1`` the wrap CRY would be a self
    loop, so the layer is a lone RY.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    ops: list[GateOp] = []
    offset = param_offset
    for _ in range(layers):
        ops.extend(_sorb_layer_ops(r1, kappa, offset))
        offset += sorb_layer_size(kappa)
    width = n_qubits if n_qubits is not None else r1 + kappa - 1
    return Circuit(width, ops, offset)


def build_univariate(
    register: int, k: int, L_u: int, param_offset: int = 0, n_qubits: int | None = None
) -> tuple[Circuit, list[tuple[int, int]]]:
    """Hierarchical circuit for one register.

    Returns the circuit and the ``[start, stop)`` parameter range of each of
    the ``k`` stages, most significant stage first.
    """
    r1 = first_qubit(register, k)
    width = n_qubits if n_qubits is not None else r1 + k - 1
    circ = Circuit(width, [], param_offset)
    stages = []
    offset = param_offset
    for j in range(1, k + 1):
        stage = build_sorb(r1, j, L_u, offset, width)
        circ.extend(stage)
        stages.append((offset, stage.n_params))
        offset = stage.n_params
    circ.n_params = offset
    return circ, stages


def build_beb(
    r: int, q: int, k: int, L_b: int, param_offset: int = 0, n_qubits: int | None = None
) -> Circuit:
    """Bivariate entangling block between registers ``r`` and ``q``.

    Each layer: one ring layer on each register, CRY(r1+j -> q1+j) for every
    bit j, then an RY on each of the 2k qubits.
    """
    BlockSpec(BEB, (r, q), k, L_b)
    r1 = first_qubit(r, k)
    q1 = first_qubit(q, k)
    width = n_qubits if n_qubits is not None else max(r1, q1) + k - 1
    ops: list[GateOp] = []
    offset = param_offset
    for _ in range(L_b):
        ops.extend(_sorb_layer_ops(r1, k, offset))
        offset += sorb_layer_size(k)
        ops.extend(_sorb_layer_ops(q1, k, offset))
        offset += sorb_layer_size(k)
        for j in range(k):
            ops.append(GateOp(CRY, q1 + j, offset, control=r1 + j))
            offset += 1
        for j in range(k):
            ops.append(GateOp(RY, r1 + j, offset))
            offset += 1
        for j in range(k):
            ops.append(GateOp(RY, q1 + j, offset))
            offset += 1
    return Circuit(width, ops, offset)


def build_block(spec: BlockSpec, param_offset: int = 0, n_qubits: int | None = None) -> Circuit:
    if spec.kind == SORB:
        return build_sorb(first_qubit(spec.registers[0], spec.k), spec.k, spec.layers,
                          param_offset, n_qubits)
    if spec.kind == UNIVARIATE:
        return build_univariate(spec.registers[0], spec.k, spec.layers, param_offset, n_qubits)[0]
    if spec.kind == BEB:
        r, q = spec.registers
        return build_beb(r, q, spec.k, spec.layers, param_offset, n_qubits)
    raise ValueError(f"unknown block kind {spec.kind!r}")


@dataclass
class VineCircuit:
    """Full ansatz for a vine, with the parameter range of every block."""

    circuit: Circuit
    marginal_stages: dict[int, list[tuple[int, int]]]
    edge_blocks: list[tuple[str, tuple[int, int], tuple[int, int]]]
    degenerate_rings: int


def build_vine_circuit(vine, k: int, L_u: int, L_b: int) -> VineCircuit:
    """Univariate circuits on every register followed by one BEB per vine edge."""
    d = vine.d
    n = d * k
    circ = Circuit(n, [], 0)
    stages = {}
    for r in range(1, d + 1):
        uni, st = build_univariate(r, k, L_u, circ.n_params, n)
        circ.extend(uni)
        stages[r] = st
    blocks = []
    for label, edge in vine.labelled_edges():
        x, y = edge.conditioned
        start = circ.n_params
        circ.extend(build_beb(x, y, k, L_b, start, n))
        blocks.append((label, (x, y), (start, circ.n_params)))
    n_edges = sum(len(t) for t in vine.trees)
    degenerate = d * L_u + (2 * L_b * n_edges if k == 1 else 0)
    return VineCircuit(circ, stages, blocks, degenerate)


@dataclass
class ResourceReport:
    n_trees: int
    n_edges: int
    n_nodes: int
    n_params: int
    n_ry: int
    n_cry: int
    formula_params: int
    formula_ry: int
    formula_cry: int
    block_depth: int
    degenerate_rings: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def table_formulas(d: int, k: int, L_u: int, L_b: int) -> dict[str, int]:
    """Closed-form resource counts of the vine ansatz."""
    pairs = d * (d - 1) // 2
    return {
        "n_trees": d - 1,
        "n_edges": pairs,
        "n_nodes": d * (d + 1) // 2 - 1,
        "params": L_u * (k + 1) * k * d + 7 * L_b * k * pairs,
        "ry": L_u * k * (k + 1) * d // 2 + 2 * L_b * k * d * (d - 1),
        "cry": L_u * k * (k + 1) * d // 2 + 3 * L_b * k * pairs,
    }


def resource_report(d: int, k: int, L_u: int, L_b: int, vine) -> ResourceReport:
    if vine.d != d:
        raise ValueError(f"vine is over {vine.d} features, expected {d}")
    f = table_formulas(d, k, L_u, L_b)
    vc = build_vine_circuit(vine, k, L_u, L_b)
    circ = vc.circuit
    return ResourceReport(
        n_trees=len(vine.trees),
        n_edges=sum(len(t) for t in vine.trees),
        n_nodes=d + sum(len(t) for t in vine.trees[:-1]),
        n_params=circ.n_params,
        n_ry=circ.count(RY),
        n_cry=circ.count(CRY),
        formula_params=f["params"],
        formula_ry=f["ry"],
        formula_cry=f["cry"],
        block_depth=schedule_blocks(vine).block_depth,
        degenerate_rings=vc.degenerate_rings,
    )


@dataclass
class Schedule:
    """BEB rounds per tree; blocks within one round touch disjoint registers."""

    rounds: list[list[list[tuple[int, int]]]] = field(default_factory=list)

    @property
    def beb_rounds(self) -> int:
        return sum(len(t) for t in self.rounds)

    @property
    def block_depth(self) -> int:
        # the univariate stage runs as one parallel round
        return 1 + self.beb_rounds


def schedule_blocks(vine) -> Schedule:
    """First-fit edge colouring of each tree, in edge order."""
    sched = Schedule()
    for tree in vine.trees:
        rounds: list[list[tuple[int, int]]] = []
        used: list[set[int]] = []
        for edge in tree:
            pair = tuple(edge.conditioned)
            for i, regs in enumerate(used):
                if not regs.intersection(pair):
                    rounds[i].append(pair)
                    regs.update(pair)
                    break
            else:
                rounds.append([pair])
                used.append(set(pair))
        sched.rounds.append(rounds)
    return sched
