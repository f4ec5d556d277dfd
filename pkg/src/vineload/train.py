"""Progressive training of the vine ansatz.

Every block is trained on its own while all earlier parameters stay frozen:
first the univariate circuits of each feature register (optionally bit by
bit, most significant bit first), then one bivariate entangling block per
vine edge in tree order.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ansatz
from .errors import NonFiniteLossError
from .statevec import (
    Circuit,
    CompiledOps,
    RealState,
    born_probs,
    fidelity,
    new_uniform,
    run,
)
from .target import DiscreteDistribution, coarsen, marginal, target_amplitudes, tvd
from .vine import VineStructure, edge_feature_pair

log = logging.getLogger(__name__)

FIDELITY = "fidelity"
SAMPLE = "sample"


@dataclass
class TrainConfig:
    lr: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 50
    lr_factor: float = 0.5
    min_lr: float = 1e-5
    max_iters: int = 2000
    init_scale: float = 0.1
    seed: int = 0
    loss: str = FIDELITY
    hierarchical_marginals: bool = True
    improvement_tol: float = 1e-10

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 < self.lr_factor < 1:
            raise ValueError("lr_factor must lie in (0, 1)")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")
        if self.loss not in (FIDELITY, SAMPLE):
            raise ValueError(f"unknown loss {self.loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    frozen_below: int = 0,
) -> np.ndarray:
    """One bias-corrected ADAM update; slots below ``frozen_below`` are untouched."""
    grads = np.array(grads, dtype=np.float64)
    grads[:frozen_below] = 0.0
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * grads
    state.v = beta2 * state.v + (1 - beta2) * grads * grads
    m_hat = state.m / (1 - beta1**state.t)
    v_hat = state.v / (1 - beta2**state.t)
    step = lr * m_hat / (np.sqrt(v_hat) + eps)
    step[:frozen_below] = 0.0
    return params - step


def init_params(rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
    return rng.uniform(-scale / 2, scale / 2, size=n)


@dataclass
class BlockRecord:
    label: str
    kind: str
    param_range: tuple[int, int]
    losses: list[float] = field(default_factory=list)
    final_loss: float = math.nan
    infidelity: float = math.nan
    tvd: float = math.nan
    seconds: float = 0.0
    iterations: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["param_range"] = list(self.param_range)
        return out


def _split_frozen(circuit: Circuit, params: np.ndarray, input: RealState) -> tuple[Circuit, RealState]:
    # run the frozen prefix once; only the trainable tail is re-simulated per step
    cut = circuit.first_free_op()
    prefix = Circuit(circuit.n_qubits, circuit.ops[:cut], circuit.n_params)
    tail = Circuit(circuit.n_qubits, circuit.ops[cut:], circuit.n_params, circuit.frozen_below)
    return tail, run(prefix, params, input)


def train_block(
    circuit: Circuit,
    params: np.ndarray,
    target_amps: np.ndarray,
    config: TrainConfig,
    input_state: RealState | None = None,
    label: str = "block",
    kind: str = "block",
    weights: np.ndarray | None = None,
) -> tuple[np.ndarray, BlockRecord]:
    """Optimize the unfrozen slots of ``params``.

    The loss is the infidelity against ``target_amps`` or, with
    ``config.loss == "sample"``, minus the ``weights``-averaged Born
    probability.  Returns the best iterate seen and its record.
    """
    t0 = time.perf_counter()
    params = np.array(params, dtype=np.float64)
    if input_state is None:
        input_state = new_uniform(circuit.n_qubits)
    target_amps = np.asarray(target_amps, dtype=np.float64)
    tail, psi_in = _split_frozen(circuit, params, input_state)
    use_sample = config.loss == SAMPLE
    if use_sample and weights is None:
        weights = target_amps**2
    comp = CompiledOps.from_ops(tail.n_qubits, tail.ops)
    frozen = tail.frozen_below

    def loss_and_grad(p):
        psi = psi_in.amps.copy()
        comp.forward(psi, p)
        if use_sample:
            cov = weights * psi
            val = float(np.dot(cov, psi))
            g = comp.backward(psi, cov, p, frozen, 0)
            return -val, -2.0 * g
        ov = float(np.dot(psi, target_amps))
        g = comp.backward(psi, target_amps.copy(), p, frozen, 0)
        return 1.0 - ov * ov, -2.0 * ov * g

    record = BlockRecord(label, kind, (circuit.frozen_below, circuit.n_params))
    adam = AdamState.zeros(params.shape[0])
    lr = config.lr
    best_loss = math.inf
    best_params = params.copy()
    plateau_ref = math.inf
    stall = 0
    for it in range(config.max_iters):
        loss, grad = loss_and_grad(params)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise NonFiniteLossError(f"{label}: non-finite loss at iteration {it}")
        record.losses.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_params = params.copy()
        if loss < plateau_ref - config.improvement_tol:
            plateau_ref = loss
            stall = 0
        else:
            stall += 1
        if stall >= config.patience:
            if lr <= config.min_lr:
                break
            lr = max(lr * config.lr_factor, config.min_lr)
            stall = 0
        params = adam_step(params, grad, adam, lr, config.adam_beta1, config.adam_beta2,
                           config.adam_eps, circuit.frozen_below)
    record.iterations = len(record.losses)
    record.final_loss = best_loss
    final = run(tail, best_params, psi_in)
    record.infidelity = 1.0 - fidelity(final, target_amps)
    record.tvd = tvd(target_amps * target_amps, born_probs(final))
    record.seconds = time.perf_counter() - t0
    log.debug("%s: loss %.3e after %d iterations", label, best_loss, record.iterations)
    return best_params, record


def sample_loss(circuit: Circuit, params, samples, input_state: RealState | None = None) -> float:
    """Mean Born probability of the sample bitstrings (integer codes or '0101' strings)."""
    if input_state is None:
        input_state = new_uniform(circuit.n_qubits)
    probs = born_probs(run(circuit, params, input_state))
    codes = np.array([int(s, 2) if isinstance(s, str) else int(s) for s in samples])
    return float(probs[codes].mean())


@dataclass
class TrainTrace:
    records: list[BlockRecord] = field(default_factory=list)
    marginal_tvd: float = math.nan
    marginal_infidelity: float = math.nan
    marginal_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def edge_records(self) -> list[BlockRecord]:
        return [r for r in self.records if r.kind == "edge"]

    def progressive(self) -> list[dict]:
        """Step 0 is the marginal stage, then one row per vine edge."""
        rows = [{
            "step": 0,
            "block": "marginals",
            "final_loss": self.marginal_infidelity,
            "infidelity": self.marginal_infidelity,
            "tvd": self.marginal_tvd,
            "seconds": self.marginal_seconds,
        }]
        for i, r in enumerate(self.edge_records(), start=1):
            rows.append({
                "step": i,
                "block": r.label,
                "final_loss": r.final_loss,
                "infidelity": r.infidelity,
                "tvd": r.tvd,
                "seconds": r.seconds,
            })
        return rows

    @property
    def final_tvd(self) -> float:
        return self.progressive()[-1]["tvd"]

    @property
    def final_infidelity(self) -> float:
        return self.progressive()[-1]["infidelity"]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "marginal_tvd": self.marginal_tvd,
            "marginal_infidelity": self.marginal_infidelity,
            "marginal_seconds": self.marginal_seconds,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainTrace":
        recs = []
        for r in data["records"]:
            r = dict(r)
            r["param_range"] = tuple(r["param_range"])
            recs.append(BlockRecord(**r))
        return cls(recs, data["marginal_tvd"], data["marginal_infidelity"],
                   data["marginal_seconds"], data.get("config", {}))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    def summary_csv(self, path) -> None:
        rows = self.progressive()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


@dataclass
class MarginalResult:
    circuit: Circuit
    params: np.ndarray
    records: list[BlockRecord]
    stages: dict[int, list[tuple[int, int]]]


def _register_target(probs: np.ndarray, k: int, bits: int) -> np.ndarray:
    # amplitudes of the leading-bits marginal with the remaining bits left uniform
    coarse = coarsen(probs, k, bits)
    spread = np.repeat(coarse, 1 << (k - bits)) / (1 << (k - bits))
    return np.sqrt(spread)


def train_marginals(
    targets: list[np.ndarray],
    k: int,
    L_u: int,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> MarginalResult:
    """Train one hierarchical univariate circuit per register on its own marginal.

    ``targets[r - 1]`` is the ``2^k`` probability table of register ``r``.
    The returned circuit spans all ``d * k`` qubits and prepares the product
    of the per-register states from ``|+>^(dk)``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d = len(targets)
    n = d * k
    full = Circuit(n, [], 0)
    params = np.zeros(0)
    stages = {}
    records = []
    for r, probs in enumerate(targets, start=1):
        probs = np.asarray(probs, dtype=np.float64)
        local, st = ansatz.build_univariate(1, k, L_u, 0, k)
        lp = np.zeros(local.n_params)
        if config.hierarchical_marginals:
            for j, (start, stop) in enumerate(st, start=1):
                sub = Circuit(k, [op for op in local.ops if op.param_slot < stop], stop, start)
                p = lp[:stop].copy()
                p[start:stop] = init_params(rng, stop - start, config.init_scale)
                p, rec = train_block(sub, p, _register_target(probs, k, j), config,
                                     label=f"M{r}.{j}", kind="marginal", weights=None)
                lp[:stop] = p
                records.append(rec)
        else:
            lp = init_params(rng, local.n_params, config.init_scale)
            lp, rec = train_block(local, lp, np.sqrt(probs), config, label=f"M{r}", kind="marginal")
            records.append(rec)
        glob, gst = ansatz.build_univariate(r, k, L_u, full.n_params, n)
        full.extend(glob)
        params = np.concatenate([params, lp])
        stages[r] = gst
        local_probs = born_probs(run(local, lp, new_uniform(k)))
        records[-1].tvd = tvd(probs, local_probs)
    full.frozen_below = full.n_params
    return MarginalResult(full, params, records, stages)


@dataclass
class VineResult:
    circuit: Circuit
    params: np.ndarray
    trace: TrainTrace
    blocks: list[tuple[str, tuple[int, int], tuple[int, int]]]
    state: RealState

    @property
    def probs(self) -> np.ndarray:
        return born_probs(self.state)


def train_through_vine(
    vine: VineStructure,
    d: int,
    k: int,
    L_u: int,
    L_b: int,
    target: DiscreteDistribution,
    config: TrainConfig,
) -> VineResult:
    """Marginal stage, then one frozen-prefix BEB per vine edge in tree order."""
    if vine.d != d or target.d != d or target.k != k:
        raise ValueError("vine, target and (d, k) disagree")
    rng = np.random.default_rng(config.seed)
    phi = target_amplitudes(target)
    psi0 = new_uniform(d * k)
    t0 = time.perf_counter()
    mres = train_marginals([marginal(target, [r]).probs for r in range(1, d + 1)],
                           k, L_u, config, rng)
    circuit, params = mres.circuit, mres.params
    state = run(circuit, params, psi0)
    trace = TrainTrace(list(mres.records), config=config.to_dict())
    trace.marginal_seconds = time.perf_counter() - t0
    trace.marginal_tvd = tvd(target.probs, born_probs(state))
    trace.marginal_infidelity = 1.0 - fidelity(state, phi)
    log.info("marginals: infidelity %.3e tvd %.3e", trace.marginal_infidelity, trace.marginal_tvd)
    blocks = []
    weights = target.probs if config.loss == SAMPLE else None
    for label, edge in vine.labelled_edges():
        pair = edge_feature_pair(edge)
        x, y = edge.conditioned
        assert {x, y} == pair
        start = circuit.n_params
        beb = ansatz.build_beb(x, y, k, L_b, start, d * k)
        circuit = Circuit(circuit.n_qubits, circuit.ops + beb.ops, beb.n_params, start)
        params = np.concatenate([params, init_params(rng, beb.n_params - start, config.init_scale)])
        # the prefix is frozen, so the cached state stands in for running it
        tail = Circuit(circuit.n_qubits, beb.ops, beb.n_params, start)
        params, rec = train_block(tail, params, phi, config, input_state=state,
                                  label=f"{label}:{edge.label()}", kind="edge", weights=weights)
        state = run(tail, params, state)
        rec.tvd = tvd(target.probs, born_probs(state))
        rec.infidelity = 1.0 - fidelity(state, phi)
        trace.records.append(rec)
        blocks.append((label, (x, y), (start, circuit.n_params)))
        log.info("%s: infidelity %.3e tvd %.3e", rec.label, rec.infidelity, rec.tvd)
    circuit.frozen_below = circuit.n_params
    return VineResult(circuit, params, trace, blocks, state)
