"""Discretized target distributions over ``2^(d*k)`` bins.

Each feature is cut into ``2^k`` bins; bin ``l`` of feature ``r`` is written
as a k-bit big-endian string, and feature 1 supplies the most significant
bits of the joint index.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, DataError, LengthMismatchError
from .statevec import MAX_QUBITS


def _check_table_width(d: int, k: int) -> None:
    if d * k > MAX_QUBITS:
        raise CapacityError(f"{d} features x {k} bits needs {d * k} qubits, above the cap of {MAX_QUBITS}")


@dataclass
class SampleSet:
    data: np.ndarray
    labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if not np.all(np.isfinite(self.data)):
            raise DataError("samples contain missing or non-finite entries")
        if not self.labels:
            self.labels = [f"x{i + 1}" for i in range(self.data.shape[1])]
        if len(self.labels) != self.data.shape[1]:
            raise DataError("one label per feature column is required")

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.data.shape[0]


@dataclass
class DiscreteDistribution:
    d: int
    k: int
    probs: np.ndarray
    edges: list[np.ndarray]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (1 << (self.d * self.k),):
            raise LengthMismatchError(
                f"expected {1 << (self.d * self.k)} probabilities, got {self.probs.shape}"
            )
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-9:
            raise DataError("probabilities must be non-negative and sum to 1")
        if not self.labels:
            self.labels = [f"x{i + 1}" for i in range(self.d)]

    @property
    def n_qubits(self) -> int:
        return self.d * self.k

    def lower(self) -> np.ndarray:
        return np.array([e[0] for e in self.edges])

    def width(self) -> np.ndarray:
        return np.array([e[1] - e[0] for e in self.edges])

    def centers(self, feature: int) -> np.ndarray:
        e = self.edges[feature - 1]
        return 0.5 * (e[:-1] + e[1:])

    def table(self) -> np.ndarray:
        return self.probs.reshape((1 << self.k,) * self.d)

    def bitstrings(self) -> list[str]:
        n = self.n_qubits
        return [format(i, f"0{n}b") for i in range(self.probs.shape[0])]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bitstring", "probability"])
            for b, p in zip(self.bitstrings(), self.probs):
                w.writerow([b, repr(float(p))])

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "labels": self.labels,
            "edges": [e.tolist() for e in self.edges],
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteDistribution":
        return cls(
            int(data["d"]),
            int(data["k"]),
            np.array(data["probs"]),
            [np.array(e) for e in data["edges"]],
            list(data.get("labels", [])),
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


def _feature_edges(col: np.ndarray, nbins: int, range_pad: float, policy: str) -> np.ndarray:
    lo, hi = float(col.min()), float(col.max())
    if hi == lo:
        return np.linspace(lo - 0.5, lo + 0.5, nbins + 1)
    if policy == "quantile":
        inner = np.quantile(col, np.linspace(0, 1, nbins + 1)[1:-1])
        pad = range_pad * (hi - lo)
        return np.concatenate([[lo - pad], inner, [hi + pad]])
    if policy != "equal-width":
        raise ValueError(f"unknown range policy {policy!r}")
    pad = range_pad * (hi - lo)
    return np.linspace(lo - pad, hi + pad, nbins + 1)


def bin_codes(data: np.ndarray, edges: list[np.ndarray], k: int) -> np.ndarray:
    """Joint bin index of every sample row."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    nbins = 1 << k
    code = np.zeros(data.shape[0], dtype=np.int64)
    for r, e in enumerate(edges):
        b = np.searchsorted(e, data[:, r], side="right") - 1
        b = np.clip(b, 0, nbins - 1)
        code = (code << k) | b
    return code


def discretize(
    samples, k: int, range_pad: float = 0.01, policy: str = "equal-width"
) -> DiscreteDistribution:
    """Relative-frequency histogram of ``samples`` on a ``2^k``-bin grid per feature."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not isinstance(samples, SampleSet):
        samples = SampleSet(samples)
    x = samples.data
    if x.shape[0] < 1:
        raise DataError("need at least one sample")
    _check_table_width(x.shape[1], k)
    nbins = 1 << k
    edges = [_feature_edges(x[:, r], nbins, range_pad, policy) for r in range(x.shape[1])]
    codes = bin_codes(x, edges, k)
    counts = np.bincount(codes, minlength=1 << (k * x.shape[1])).astype(np.float64)
    return DiscreteDistribution(x.shape[1], k, counts / counts.sum(), edges, list(samples.labels))


def gaussian_target(mu, sigma, k: int, ranges=None, width_sd: float = 3.0) -> DiscreteDistribution:
    """Normal density at bin centres times bin volume, renormalized.

    ``ranges`` is a list of ``(lo, hi)`` per feature; by default each feature
    spans ``mu_i +/- width_sd * sigma_i``.
    """
    mu = np.asarray(mu, dtype=np.float64).ravel()
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    d = mu.shape[0]
    if sigma.shape != (d, d):
        raise DataError(f"covariance must be {d}x{d}, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=1e-14):
        raise DataError("covariance is not symmetric")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise DataError("covariance is not positive definite") from exc
    _check_table_width(d, k)
    sd = np.sqrt(np.diag(sigma))
    if ranges is None:
        ranges = [(mu[i] - width_sd * sd[i], mu[i] + width_sd * sd[i]) for i in range(d)]
    nbins = 1 << k
    edges = [np.linspace(lo, hi, nbins + 1) for lo, hi in ranges]
    centres = [0.5 * (e[:-1] + e[1:]) for e in edges]
    grid = np.stack(np.meshgrid(*centres, indexing="ij"), axis=-1).reshape(-1, d)
    z = np.linalg.solve(chol, (grid - mu).T)
    dens = np.exp(-0.5 * np.sum(z * z, axis=0))
    vol = np.prod([e[1] - e[0] for e in edges])
    mass = dens * vol
    return DiscreteDistribution(d, k, mass / mass.sum(), edges)


def target_amplitudes(dist: DiscreteDistribution) -> np.ndarray:
    amps = np.sqrt(dist.probs)
    return amps / np.linalg.norm(amps)


def marginal(dist: DiscreteDistribution, features) -> DiscreteDistribution:
    """Distribution of the listed (1-based) features, in the listed order."""
    features = [int(f) for f in features]
    if not features:
        raise ValueError("feature subset must be non-empty")
    if len(set(features)) != len(features) or not all(1 <= f <= dist.d for f in features):
        raise ValueError(f"bad feature subset {features}")
    table = dist.table()
    drop = tuple(i for i in range(dist.d) if i + 1 not in features)
    kept = sorted(features)
    sub = table.sum(axis=drop) if drop else table
    sub = np.transpose(sub, [kept.index(f) for f in features])
    probs = np.ascontiguousarray(sub).ravel()
    return DiscreteDistribution(
        len(features),
        dist.k,
        probs / probs.sum(),
        [dist.edges[f - 1] for f in features],
        [dist.labels[f - 1] for f in features],
    )


def coarsen(probs, k: int, bits: int) -> np.ndarray:
    """Sum a one-feature ``2^k`` table over its ``k - bits`` least significant bits."""
    probs = np.asarray(probs, dtype=np.float64)
    return probs.reshape(1 << bits, 1 << (k - bits)).sum(axis=1)


def tvd(p, q) -> float:
    """Half the L1 distance between two probability vectors."""
    p = p.probs if isinstance(p, DiscreteDistribution) else np.asarray(p, dtype=np.float64)
    q = q.probs if isinstance(q, DiscreteDistribution) else np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise LengthMismatchError(f"shapes differ: {p.shape} vs {q.shape}")
    return float(0.5 * np.abs(p - q).sum())


def log_returns(prices, labels=None) -> SampleSet:
    """Row ``t`` holds ``log(p(t) / p(t-1))`` for every asset."""
    p = np.asarray(prices, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] < 2:
        raise DataError("need at least two time points")
    if not np.all(np.isfinite(p)):
        raise DataError("prices contain missing values")
    if np.any(p <= 0):
        raise DataError("prices must be positive")
    return SampleSet(np.diff(np.log(p), axis=0), list(labels or []))


def read_price_csv(path) -> tuple[list[dt.date], list[str], np.ndarray]:
    """Parse a ``date,<ticker1>,<ticker2>,...`` file, one row per trading day."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise DataError(f"{path}:1: header must be 'date,<ticker>,...'")
    tickers = header[1:]
    dates: list[dt.date] = []
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            day = dt.date.fromisoformat(row[0].strip())
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad date {row[0]!r}") from exc
        if dates and day <= dates[-1]:
            raise DataError(f"{path}:{lineno}: dates must be strictly increasing")
        vals = []
        for col, cell in zip(tickers, row[1:]):
            cell = cell.strip()
            if not cell:
                raise DataError(f"{path}:{lineno}: missing value for {col}")
            try:
                v = float(cell)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad number {cell!r} for {col}") from exc
            if not v > 0:
                raise DataError(f"{path}:{lineno}: non-positive price for {col}")
            vals.append(v)
        dates.append(day)
        values.append(vals)
    return dates, tickers, np.array(values)
