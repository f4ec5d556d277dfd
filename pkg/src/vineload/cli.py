"""Command-line entry point: ``vineload <command> [options]``.

Settings are layered: a ``--preset`` supplies defaults, a ``--config`` JSON
file overrides them and explicit flags override both.  Config file keys::

    {
      "preset": "gauss4",
      "csv": "prices.csv",                      # date,TICKER1,... price table
      "gaussian": {"mu": [...], "sigma": [[...]], "ranges": [[lo, hi], ...]},
      "k": 3, "layers_uni": 1, "layers_biv": 9,
      "vine": "dvine" | "cvine" | "rvine" | "file:<path>",
      "seed": 0, "out": "results",
      "grid": [[1, 1], [2, 3]],                 # ablate only
      "train": {"lr": 0.05, "max_iters": 2000, ...}   # any TrainConfig field
    }
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from . import ansatz, dla
from .errors import VineLoadError
from .target import (
    DiscreteDistribution,
    discretize,
    gaussian_target,
    log_returns,
    marginal,
    read_price_csv,
)
from .train import TrainConfig, VineResult, train_through_vine
from .vine import (
    VineStructure,
    build_cvine,
    build_dvine,
    dvine_order_from_tau,
    gaussian_tau,
    pseudo_obs,
    rvine_from_tau,
    tau_matrix,
)

log = logging.getLogger("vineload")

SIGMA_3D_COR = [[0.05, 0.03, 0.015], [0.03, 0.05, -0.01], [0.015, -0.01, 0.05]]
SIGMA_4D_COR = [
    [0.05, 0.03, 0.015, 0.01],
    [0.03, 0.05, -0.01, 0.02],
    [0.015, -0.01, 0.05, 0.025],
    [0.01, 0.02, 0.025, 0.05],
]

PRESETS: dict[str, dict] = {
    "gauss3-uncorr": {
        "gaussian": {"mu": [0.05] * 3, "sigma": (0.25 * np.eye(3)).tolist()},
        "k": 3, "layers_uni": 1, "layers_biv": 1,
        "train": {"hierarchical_marginals": False},
    },
    "gauss3-corr": {
        "gaussian": {"mu": [0.05] * 3, "sigma": SIGMA_3D_COR},
        "k": 3, "layers_uni": 3, "layers_biv": 27,
        "train": {"max_iters": 5000},
    },
    "gauss4": {
        "gaussian": {"mu": [0.05] * 4, "sigma": SIGMA_4D_COR},
        "k": 3, "layers_uni": 3, "layers_biv": 27,
        "train": {"max_iters": 10000},
    },
    "returns3": {"expect_d": 3, "k": 3, "layers_uni": 2, "layers_biv": 9},
    "returns4": {"expect_d": 4, "k": 3, "layers_uni": 2, "layers_biv": 9},
}


class UsageError(Exception):
    """Bad command-line or config input; reported with exit status 2."""


@dataclass
class RunConfig:
    csv: str | None = None
    gaussian: dict | None = None
    expect_d: int | None = None
    d: int | None = None
    k: int = 3
    layers_uni: int = 1
    layers_biv: int = 1
    vine: str = "dvine"
    seed: int = 0
    out: str | None = None
    grid: list = field(default_factory=list)
    train: dict = field(default_factory=dict)

    def train_config(self) -> TrainConfig:
        known = {f.name for f in fields(TrainConfig)}
        bad = set(self.train) - known
        if bad:
            raise UsageError(f"unknown train option(s): {', '.join(sorted(bad))}")
        return TrainConfig(**{**self.train, "seed": self.seed})


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, val in extra.items():
        if key == "train" and isinstance(val, dict):
            out["train"] = {**out.get("train", {}), **val}
        else:
            out[key] = val
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    file_data: dict = {}
    if args.config:
        try:
            file_data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(file_data, dict):
            raise UsageError(f"{args.config}: top level must be an object")
    preset = args.preset or file_data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        data = _merge(data, PRESETS[preset])
    data = _merge(data, file_data)
    flag_map = {
        "csv": args.csv, "out": args.out, "seed": args.seed, "k": args.k,
        "layers_uni": args.layers_uni, "layers_biv": args.layers_biv, "vine": args.vine,
        "d": getattr(args, "d", None),
    }
    data = _merge(data, {k: v for k, v in flag_map.items() if v is not None})
    train = {}
    for name in ("lr", "max_iters", "patience", "loss"):
        val = getattr(args, name, None)
        if val is not None:
            train[name] = val
    if getattr(args, "flat_marginals", False):
        train["hierarchical_marginals"] = False
    data = _merge(data, {"train": train})
    if getattr(args, "grid", None) is not None:
        data["grid"] = parse_grid(args.grid)
    known = {f.name for f in fields(RunConfig)}
    bad = set(data) - known
    if bad:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(bad))}")
    return RunConfig(**data)


def parse_grid(text: str) -> list[list[int]]:
    """``"1x1,2x3"`` -> ``[[1, 1], [2, 3]]``."""
    grid = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        try:
            a, b = item.lower().split("x")
            grid.append([int(a), int(b)])
        except ValueError as exc:
            raise UsageError(f"bad grid entry {item!r}; expected L_uxL_b such as 2x3") from exc
    return grid


@dataclass
class Problem:
    labels: list[str]
    tau: np.ndarray
    target: DiscreteDistribution | None
    samples: np.ndarray | None = None


def load_problem(cfg: RunConfig, need_target: bool = True) -> Problem:
    if cfg.csv and cfg.gaussian:
        raise UsageError("give either a CSV or a gaussian spec, not both")
    if cfg.csv:
        _, tickers, prices = read_price_csv(cfg.csv)
        rets = log_returns(prices, tickers)
        if cfg.expect_d is not None and rets.d != cfg.expect_d:
            raise UsageError(f"preset expects {cfg.expect_d} assets, {cfg.csv} has {rets.d}")
        tau = tau_matrix(pseudo_obs(rets.data))
        target = discretize(rets, cfg.k) if need_target else None
        return Problem(list(tickers), tau, target, rets.data)
    if cfg.gaussian:
        mu = np.asarray(cfg.gaussian["mu"], dtype=np.float64)
        sigma = np.asarray(cfg.gaussian["sigma"], dtype=np.float64)
        if sigma.shape != (mu.size, mu.size):
            raise UsageError(f"sigma must be {mu.size}x{mu.size} to match mu")
        target = gaussian_target(mu, sigma, cfg.k, cfg.gaussian.get("ranges")) if need_target else None
        return Problem([f"x{i}" for i in range(1, mu.size + 1)], gaussian_tau(sigma), target)
    if cfg.expect_d is not None:
        raise UsageError("this preset needs --csv with a price table")
    raise UsageError("no input: use --preset, --csv or a config with a gaussian spec")


def cvine_roots(tau: np.ndarray) -> list[int]:
    # most connected features first; ties go to the lower index
    w = np.abs(tau) - np.eye(tau.shape[0])
    order = sorted(range(tau.shape[0]), key=lambda i: (-w[i].sum(), i))
    return [i + 1 for i in order[:-1]]


def choose_vine(cfg: RunConfig, tau: np.ndarray) -> VineStructure:
    d = tau.shape[0]
    mode = cfg.vine
    if mode.startswith("file:"):
        vine = VineStructure.from_json(mode[5:])
        if vine.d != d:
            raise UsageError(f"vine file is over {vine.d} features, the data has {d}")
        return vine
    if mode == "dvine":
        return build_dvine(dvine_order_from_tau(tau))
    if mode == "cvine":
        return build_cvine(cvine_roots(tau), d=d)
    if mode == "rvine":
        return rvine_from_tau(tau)
    raise UsageError(f"unknown vine mode {mode!r}")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_tau(path: Path, labels: list[str], tau: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", *labels])
        for lab, row in zip(labels, tau):
            w.writerow([lab, *map(repr, row.tolist())])


def read_tau(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0][1:], np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def write_projections(out: Path, learned: np.ndarray, target: DiscreteDistribution) -> list[Path]:
    """1D and 2D marginal tables of the learned and target distributions."""
    paths = []
    learned_dist = replace(target, probs=np.asarray(learned))
    for r in range(1, target.d + 1):
        p = out / f"projections_{r}.csv"
        lp, tp = marginal(learned_dist, [r]).probs, marginal(target, [r]).probs
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "center", "learned", "target"])
            for b, c in enumerate(target.centers(r)):
                w.writerow([b, repr(float(c)), repr(float(lp[b])), repr(float(tp[b]))])
        paths.append(p)
    for r, q in combinations(range(1, target.d + 1), 2):
        p = out / f"projections_{r}-{q}.csv"
        lp = marginal(learned_dist, [r, q]).table()
        tp = marginal(target, [r, q]).table()
        cr, cq = target.centers(r), target.centers(q)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_a", "bin_b", "center_a", "center_b", "learned", "target"])
            for a in range(len(cr)):
                for b in range(len(cq)):
                    w.writerow([a, b, repr(float(cr[a])), repr(float(cq[b])),
                                repr(float(lp[a, b])), repr(float(tp[a, b]))])
        paths.append(p)
    return paths


def write_distribution(path: Path, learned: np.ndarray, target: DiscreteDistribution) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bitstring", "learned", "target"])
        for bits, lp, tp in zip(target.bitstrings(), learned, target.probs):
            w.writerow([bits, repr(float(lp)), repr(float(tp))])


def write_checkpoint(out: Path, res: VineResult, cfg: RunConfig, d: int) -> None:
    res.params.astype("<f8").tofile(out / "checkpoint.bin")
    meta = {
        "format": "little-endian float64, one value per parameter slot",
        "n_params": int(res.params.size),
        "d": d, "k": cfg.k, "layers_uni": cfg.layers_uni, "layers_biv": cfg.layers_biv,
        "blocks": [
            {"label": r.label, "kind": r.kind, "start": r.param_range[0], "stop": r.param_range[1]}
            for r in res.trace.records
        ],
        "edges": [
            {"label": lab, "registers": list(regs), "start": a, "stop": b}
            for lab, regs, (a, b) in res.blocks
        ],
    }
    (out / "checkpoint.json").write_text(json.dumps(meta, indent=2) + "\n")


def read_checkpoint(out) -> tuple[np.ndarray, dict]:
    out = Path(out)
    return np.fromfile(out / "checkpoint.bin", dtype="<f8"), json.loads((out / "checkpoint.json").read_text())


def run_training(cfg: RunConfig, problem: Problem, vine: VineStructure, out: Path | None) -> dict:
    d = problem.tau.shape[0]
    t0 = time.perf_counter()
    res = train_through_vine(vine, d, cfg.k, cfg.layers_uni, cfg.layers_biv, problem.target,
                             cfg.train_config())
    seconds = time.perf_counter() - t0
    summary = {
        "d": d, "k": cfg.k, "layers_uni": cfg.layers_uni, "layers_biv": cfg.layers_biv,
        "vine": vine.describe(),
        "marginal_tvd": res.trace.marginal_tvd,
        "final_tvd": res.trace.final_tvd,
        "final_infidelity": res.trace.final_infidelity,
        "seconds": seconds,
    }
    if out is not None:
        vine.to_json(out / "vine.json")
        res.trace.to_json(out / "trace.json")
        res.trace.summary_csv(out / "tvd_by_block.csv")
        write_distribution(out / "distribution.csv", res.probs, problem.target)
        write_projections(out, res.probs, problem.target)
        write_checkpoint(out, res, cfg, d)
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_fit_vine(cfg: RunConfig) -> int:
    problem = load_problem(cfg, need_target=False)
    vine = choose_vine(cfg, problem.tau)
    out = _out_dir(cfg)
    vine.to_json(out / "vine.json")
    write_tau(out / "tau.csv", problem.labels, problem.tau)
    for i, tree in enumerate(vine.describe(), start=1):
        print(f"T{i}: {' '.join(tree)}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    problem = load_problem(cfg)
    vine = choose_vine(cfg, problem.tau)
    out = _out_dir(cfg)
    write_tau(out / "tau.csv", problem.labels, problem.tau)
    s = run_training(cfg, problem, vine, out)
    print(f"marginal TVD {s['marginal_tvd']:.4e}  final TVD {s['final_tvd']:.4e}  "
          f"final infidelity {s['final_infidelity']:.4e}  ({s['seconds']:.1f} s)")
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    if not cfg.grid:
        raise UsageError("ablate needs a non-empty --grid such as 1x1,2x3")
    problem = load_problem(cfg)
    vine = choose_vine(cfg, problem.tau)
    out = _out_dir(cfg)
    rows = []
    for L_u, L_b in cfg.grid:
        point = replace(cfg, layers_uni=int(L_u), layers_biv=int(L_b))
        sub = out / f"Lu{L_u}_Lb{L_b}"
        sub.mkdir(exist_ok=True)
        s = run_training(point, problem, vine, sub)
        rows.append({"layers_uni": L_u, "layers_biv": L_b, "marginal_tvd": s["marginal_tvd"],
                     "final_tvd": s["final_tvd"], "final_infidelity": s["final_infidelity"],
                     "seconds": s["seconds"]})
        print(f"L_u={L_u} L_b={L_b}: final TVD {s['final_tvd']:.4e}")
    best = min(range(len(rows)), key=lambda i: rows[i]["final_tvd"])
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=[*rows[0], "best"])
        w.writeheader()
        for i, row in enumerate(rows):
            w.writerow({**{k: repr(v) if isinstance(v, float) else v for k, v in row.items()},
                        "best": int(i == best)})
    return 0


def cmd_resources(cfg: RunConfig) -> int:
    if cfg.gaussian or cfg.csv:
        problem = load_problem(cfg, need_target=False)
        vine = choose_vine(cfg, problem.tau)
    elif cfg.d is not None:
        vine = build_dvine(list(range(1, cfg.d + 1)))
    else:
        raise UsageError("resources needs --d, a gaussian spec or --csv")
    d = vine.d
    report = ansatz.resource_report(d, cfg.k, cfg.layers_uni, cfg.layers_biv, vine)
    sched = ansatz.schedule_blocks(vine)
    data = {"d": d, "k": cfg.k, "layers_uni": cfg.layers_uni, "layers_biv": cfg.layers_biv,
            **report.to_dict(), "beb_rounds": sched.beb_rounds}
    for key, val in data.items():
        print(f"{key:<18} {val}")
    if cfg.out:
        (_out_dir(cfg) / "resources.json").write_text(json.dumps(data, indent=2) + "\n")
    return 0


def cmd_verify_dla(cfg: RunConfig, include_large: bool) -> int:
    rows = dla.verify_theorems(cfg.k, include_large=include_large)
    print(dla.format_report(rows))
    if cfg.out:
        (_out_dir(cfg) / "dla.json").write_text(json.dumps([r.to_dict() for r in rows], indent=2) + "\n")
    return 0 if all(r.ok or r.found is None for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--csv", help="price table: date column then one column per asset")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--k", type=int, help="qubits per feature")
    common.add_argument("--layers-uni", type=int, dest="layers_uni")
    common.add_argument("--layers-biv", type=int, dest="layers_biv")
    common.add_argument("--vine", help="dvine, cvine, rvine or file:<path>")
    common.add_argument("-v", "--verbose", action="store_true")
    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--lr", type=float)
    training.add_argument("--max-iters", type=int, dest="max_iters")
    training.add_argument("--patience", type=int)
    training.add_argument("--loss", choices=["fidelity", "sample"])
    training.add_argument("--flat-marginals", action="store_true", dest="flat_marginals",
                          help="train each register's univariate circuit in one go")

    p = argparse.ArgumentParser(prog="vineload", description="Vine-structured amplitude loading.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fit-vine", parents=[common], help="select a vine and write vine.json, tau.csv")
    sub.add_parser("train", parents=[common, training], help="progressive training through the vine")
    ab = sub.add_parser("ablate", parents=[common, training], help="train over a grid of layer counts")
    ab.add_argument("--grid", help="comma separated L_uxL_b pairs, e.g. 1x1,2x3")
    rs = sub.add_parser("resources", parents=[common], help="gate and parameter counts")
    rs.add_argument("--d", type=int, help="number of features (D-vine) when no data is given")
    dl = sub.add_parser("verify-dla", parents=[common], help="Lie closure dimension checks")
    dl.add_argument("--include-large", action="store_true", help="also run the 6-qubit closure")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        if args.command == "fit-vine":
            return cmd_fit_vine(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        if args.command == "resources":
            return cmd_resources(cfg)
        return cmd_verify_dla(cfg, args.include_large)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"vineload: error: {exc}", file=sys.stderr)
        return 2
    except (VineLoadError, ValueError, OSError, KeyError) as exc:
        print(f"vineload: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
