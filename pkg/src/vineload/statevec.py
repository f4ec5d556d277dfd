"""Real-amplitude statevector engine for circuits built from RY and CRY gates.

Qubits are numbered from 1 and qubit 1 is the most significant bit of the
basis index, so the basis state ``|x_1 x_2 ... x_n>`` lives at index
``int("x_1x_2...x_n", 2)``.  Every gate in the supported set is a real
rotation, so amplitudes are stored as ``float64`` and never become complex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import CapacityError, InvalidGateError, LengthMismatchError

MAX_QUBITS = 26

RY = "RY"
CRY = "CRY"


@dataclass
class RealState:
    """Real amplitude vector over ``n_qubits`` qubits."""

    n_qubits: int
    amps: np.ndarray

    def __post_init__(self) -> None:
        self.amps = np.ascontiguousarray(self.amps, dtype=np.float64)
        if self.amps.ndim != 1 or self.amps.shape[0] != 1 << self.n_qubits:
            raise LengthMismatchError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amps.shape}"
            )

    @classmethod
    def from_amplitudes(cls, amps: Sequence[float]) -> "RealState":
        amps = np.asarray(amps, dtype=np.float64)
        n = int(round(math.log2(amps.shape[0])))
        return cls(n, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def copy(self) -> "RealState":
        return RealState(self.n_qubits, self.amps.copy())

    def to_records(self) -> list[tuple[str, float]]:
        """Flat ``(bitstring, amplitude)`` list, bitstrings qubit 1 first."""
        n = self.n_qubits
        return [(format(i, f"0{n}b"), float(a)) for i, a in enumerate(self.amps)]


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    param_slot: int
    control: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in (RY, CRY):
            raise InvalidGateError(f"unsupported gate kind {self.kind!r}")
        if self.kind == CRY:
            if self.control is None:
                raise InvalidGateError("CRY needs a control qubit")
            if self.control == self.target:
                raise InvalidGateError(f"control equals target ({self.target})")
        elif self.control is not None:
            raise InvalidGateError("RY takes no control qubit")

    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)


@dataclass
class Circuit:
    """Ordered list of gate applications bound to parameter slots.

    Slots below ``frozen_below`` are held fixed during training.
    """

    n_qubits: int
    ops: list[GateOp] = field(default_factory=list)
    n_params: int = 0
    frozen_below: int = 0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for op in self.ops:
            for q in op.qubits():
                if not 1 <= q <= self.n_qubits:
                    raise InvalidGateError(
                        f"qubit {q} outside [1, {self.n_qubits}] in {op}"
                    )
            if not 0 <= op.param_slot < self.n_params:
                raise InvalidGateError(
                    f"param slot {op.param_slot} outside [0, {self.n_params})"
                )

    def extend(self, fragment: "Circuit") -> None:
        """Append the ops of ``fragment`` (slots are taken verbatim)."""
        if fragment.n_qubits > self.n_qubits:
            raise InvalidGateError("fragment is wider than the circuit")
        self.ops.extend(fragment.ops)
        self.n_params = max(self.n_params, fragment.n_params)
        self.validate()

    def count(self, kind: str) -> int:
        return sum(1 for op in self.ops if op.kind == kind)

    def first_free_op(self) -> int:
        """Index of the first op whose slot is trainable (``len(ops)`` if none)."""
        for i, op in enumerate(self.ops):
            if op.param_slot >= self.frozen_below:
                return i
        return len(self.ops)


def _check_width(n_qubits: int, max_qubits: int) -> None:
    if n_qubits < 1:
        raise ValueError(f"need at least one qubit, got {n_qubits}")
    if n_qubits > max_qubits:
        raise CapacityError(f"{n_qubits} qubits exceeds the cap of {max_qubits}")


def new_uniform(n_qubits: int, max_qubits: int = MAX_QUBITS) -> RealState:
    """The ``|+>^n`` state."""
    _check_width(n_qubits, max_qubits)
    dim = 1 << n_qubits
    return RealState(n_qubits, np.full(dim, 2.0 ** (-n_qubits / 2)))


def basis_state(n_qubits: int, index: int, max_qubits: int = MAX_QUBITS) -> RealState:
    _check_width(n_qubits, max_qubits)
    amps = np.zeros(1 << n_qubits)
    amps[index] = 1.0
    return RealState(n_qubits, amps)


@njit(cache=True)
def _rot(amps, n, target, control, theta):
    # rotate every (bit t = 0, bit t = 1) amplitude pair, restricted to control = 1
    tbit = 1 << (n - target)
    cbit = 0 if control < 0 else 1 << (n - control)
    low = tbit - 1
    c = math.cos(theta / 2)
    s = math.sin(theta / 2)
    for k in range(amps.shape[0] >> 1):
        i = ((k & ~low) << 1) | (k & low)
        if (i & cbit) != cbit:
            continue
        j = i | tbit
        a = amps[i]
        b = amps[j]
        amps[i] = c * a - s * b
        amps[j] = s * a + c * b


@njit(cache=True)
def _forward(amps, n, targets, controls, slots, params, start):
    for idx in range(start, targets.shape[0]):
        _rot(amps, n, targets[idx], controls[idx], params[slots[idx]])


@njit(cache=True)
def _backward(psi, lam, n, targets, controls, slots, params, frozen_below, stop, grad):
    # psi enters as the output state, lam as the covector; both are consumed
    for idx in range(targets.shape[0] - 1, stop - 1, -1):
        theta = params[slots[idx]]
        tbit = 1 << (n - targets[idx])
        cbit = 0 if controls[idx] < 0 else 1 << (n - controls[idx])
        low = tbit - 1
        c = math.cos(theta / 2)
        s = math.sin(theta / 2)
        active = slots[idx] >= frozen_below
        g = 0.0
        for k in range(psi.shape[0] >> 1):
            i = ((k & ~low) << 1) | (k & low)
            if (i & cbit) != cbit:
                continue
            j = i | tbit
            # undo the gate: R(-theta)
            a = c * psi[i] + s * psi[j]
            b = -s * psi[i] + c * psi[j]
            psi[i] = a
            psi[j] = b
            la = lam[i]
            lb = lam[j]
            if active:
                # d/dtheta R(theta) = R(theta + pi) / 2 on the active subspace
                g += la * (-s * a - c * b) + lb * (c * a - s * b)
            lam[i] = c * la + s * lb
            lam[j] = -s * la + c * lb
        if active:
            grad[slots[idx]] += 0.5 * g


@dataclass(frozen=True)
class CompiledOps:
    """Gate list flattened to integer arrays for the compiled sweeps."""

    n_qubits: int
    targets: np.ndarray
    controls: np.ndarray
    slots: np.ndarray

    @classmethod
    def from_ops(cls, n_qubits: int, ops: Sequence[GateOp]) -> "CompiledOps":
        return cls(
            n_qubits,
            np.array([op.target for op in ops], dtype=np.int64),
            np.array([-1 if op.control is None else op.control for op in ops], dtype=np.int64),
            np.array([op.param_slot for op in ops], dtype=np.int64),
        )

    def forward(self, amps: np.ndarray, params: np.ndarray, start: int = 0) -> None:
        _forward(amps, self.n_qubits, self.targets, self.controls, self.slots, params, start)

    def backward(
        self, psi: np.ndarray, lam: np.ndarray, params: np.ndarray, frozen_below: int, stop: int
    ) -> np.ndarray:
        grad = np.zeros(params.shape[0])
        _backward(psi, lam, self.n_qubits, self.targets, self.controls, self.slots, params,
                  frozen_below, stop, grad)
        return grad


def _rotate(amps: np.ndarray, n: int, target: int, control: int | None, theta: float) -> None:
    _rot(amps, n, target, -1 if control is None else control, float(theta))


def _check_qubit(n: int, q: int) -> None:
    if not 1 <= q <= n:
        raise InvalidGateError(f"qubit {q} outside [1, {n}]")


def apply_ry(state: RealState, target: int, theta: float) -> RealState:
    _check_qubit(state.n_qubits, target)
    _rotate(state.amps, state.n_qubits, target, None, theta)
    return state


def apply_cry(state: RealState, control: int, target: int, theta: float) -> RealState:
    if control == target:
        raise InvalidGateError(f"control equals target ({target})")
    _check_qubit(state.n_qubits, control)
    _check_qubit(state.n_qubits, target)
    _rotate(state.amps, state.n_qubits, target, control, theta)
    return state


def apply_op(state: RealState, op: GateOp, theta: float) -> RealState:
    _rotate(state.amps, state.n_qubits, op.target, op.control, theta)
    return state


def _check_params(circuit: Circuit, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (circuit.n_params,):
        raise LengthMismatchError(
            f"circuit has {circuit.n_params} parameters, got {params.shape}"
        )
    return params


def _apply_ops(amps: np.ndarray, n: int, ops: Sequence[GateOp], params: np.ndarray) -> None:
    CompiledOps.from_ops(n, ops).forward(amps, params)


def run(circuit: Circuit, params: Sequence[float], input: RealState) -> RealState:
    """Apply the circuit to a copy of ``input`` and return the result."""
    params = _check_params(circuit, params)
    if input.n_qubits != circuit.n_qubits:
        raise LengthMismatchError(
            f"circuit acts on {circuit.n_qubits} qubits, state has {input.n_qubits}"
        )
    out = input.copy()
    _apply_ops(out.amps, out.n_qubits, circuit.ops, params)
    return out


def _amps_of(x) -> np.ndarray:
    return x.amps if isinstance(x, RealState) else np.asarray(x, dtype=np.float64)


def fidelity(state: RealState, target_amps) -> float:
    """Squared overlap ``<psi|phi>^2`` of two real vectors."""
    psi = _amps_of(state)
    phi = _amps_of(target_amps)
    if psi.shape != phi.shape:
        raise LengthMismatchError(f"shapes differ: {psi.shape} vs {phi.shape}")
    return float(np.dot(psi, phi) ** 2)


def born_probs(state: RealState) -> np.ndarray:
    return np.square(state.amps)


def overlap_gradient(
    circuit: Circuit,
    params: Sequence[float],
    input: RealState,
    covector: np.ndarray,
) -> tuple[RealState, np.ndarray]:
    """Reverse-mode derivative of ``<covector|U(params)|input>``.

    Returns the output state and the vector of partial derivatives with
    respect to every parameter slot; frozen slots are reported as zero.
    The forward pass keeps only the final state, and the backward pass walks
    the gates in reverse, undoing each one on the state while pulling the
    covector back through its transpose.
    """
    params = _check_params(circuit, params)
    covector = np.asarray(covector, dtype=np.float64)
    out = run(circuit, params, input)
    if covector.shape != out.amps.shape:
        raise LengthMismatchError(f"covector shape {covector.shape} != {out.amps.shape}")
    comp = CompiledOps.from_ops(circuit.n_qubits, circuit.ops)
    grad = comp.backward(out.amps.copy(), covector.copy(), params, circuit.frozen_below,
                         circuit.first_free_op())
    return out, grad


def grad_fidelity(
    circuit: Circuit,
    params: Sequence[float],
    input: RealState,
    target_amps,
) -> np.ndarray:
    """Exact gradient of the fidelity against ``target_amps``."""
    phi = _amps_of(target_amps)
    out, g = overlap_gradient(circuit, params, input, phi)
    return 2.0 * float(np.dot(out.amps, phi)) * g


def fidelity_and_grad(
    circuit: Circuit, params: Sequence[float], input: RealState, target_amps
) -> tuple[float, np.ndarray]:
    phi = _amps_of(target_amps)
    out, g = overlap_gradient(circuit, params, input, phi)
    ov = float(np.dot(out.amps, phi))
    return ov * ov, 2.0 * ov * g


def weighted_prob_and_grad(
    circuit: Circuit, params: Sequence[float], input: RealState, weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Value and gradient of ``sum_x w_x |<x|psi>|^2``."""
    weights = np.asarray(weights, dtype=np.float64)
    out = run(circuit, params, input)
    cov = weights * out.amps
    # the covector depends on the output, but d(psi^T W psi) = 2 (W psi)^T dpsi
    _, g = overlap_gradient(circuit, params, input, cov)
    return float(np.dot(cov, out.amps)), 2.0 * g


def dense_matrix(circuit: Circuit, params: Sequence[float]) -> np.ndarray:
    """Dense ``2^n x 2^n`` matrix of the circuit, column ``j`` = image of ``|j>``."""
    params = _check_params(circuit, params)
    n = circuit.n_qubits
    dim = 1 << n
    cols = []
    for j in range(dim):
        col = np.zeros(dim)
        col[j] = 1.0
        _apply_ops(col, n, circuit.ops, params)
        cols.append(col)
    return np.stack(cols, axis=1)
