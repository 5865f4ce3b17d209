"""Experiment harness: CSV ingestion, train/test splits, multi-seed runs.

CSV conventions: classification files carry a header row with the label in
the final column; matrix data comes as (i, j, r) triples with header
``i,j,r``.  Aggregation over seeds reports mean and standard deviation per
metric, matching the mean +/- std cells of the result tables.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .boosting import BoostTrace, FwConfig, run_boosting
from .densities import Mixture, QuadratureGrid
from .models import (
    Dataset,
    TargetModel,
    logistic_regression_model,
    matrix_factorization_model,
    predictive_metrics,
    synthetic_bimodal_target,
)

MODEL_KINDS = ("bimodal", "logistic", "matrix_factorization")


def load_csv(path: str, schema: str = "classification") -> Dataset:
    """Read a dataset from CSV; see the module docstring for the conventions."""
    if schema not in ("classification", "matrix"):
        raise ValueError(f"unknown schema {schema!r}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row")
        rows = []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            parsed = []
            for c, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric cell at row {r}, column {c} ({cell!r})"
                    )
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows)
    if schema == "classification":
        if data.shape[1] < 2:
            raise ValueError(f"{path}: label column absent (need >= 2 columns)")
        return Dataset(features=data[:, :-1], labels=data[:, -1])
    if data.shape[1] != 3:
        raise ValueError(f"{path}: matrix schema expects exactly (i, j, r) columns")
    ii = data[:, 0].astype(int)
    jj = data[:, 1].astype(int)
    if np.any(ii < 0) or np.any(jj < 0):
        raise ValueError(f"{path}: matrix indices must be nonnegative")
    matrix = np.zeros((ii.max() + 1, jj.max() + 1))
    mask = np.zeros_like(matrix, dtype=bool)
    matrix[ii, jj] = data[:, 2]
    mask[ii, jj] = True
    return Dataset(features=None, labels=matrix, mask=mask)


def write_csv(data: Dataset, path: str) -> None:
    """Inverse of :func:`load_csv` for the matching schema."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if data.mask is not None:
            writer.writerow(["i", "j", "r"])
            for i, j in zip(*np.nonzero(data.mask)):
                writer.writerow([int(i), int(j), repr(float(data.labels[i, j]))])
        else:
            n_feat = data.features.shape[1]
            writer.writerow([f"x{k + 1}" for k in range(n_feat)] + ["y"])
            for x, y in zip(data.features, data.labels):
                writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def split(data: Dataset, fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled train/test split.

    Classification data splits by row; masked matrices split the observed
    cells into two disjoint masks over the same matrix.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    if data.mask is not None:
        cells = np.argwhere(data.mask)
        if len(cells) < 2:
            raise ValueError("need at least 2 observed cells to split")
        perm = rng.permutation(len(cells))
        n_train = int(round(fraction * len(cells)))
        train_mask = np.zeros_like(data.mask)
        test_mask = np.zeros_like(data.mask)
        tr = cells[perm[:n_train]]
        te = cells[perm[n_train:]]
        train_mask[tr[:, 0], tr[:, 1]] = True
        test_mask[te[:, 0], te[:, 1]] = True
        return (
            Dataset(features=None, labels=data.labels, mask=train_mask),
            Dataset(features=None, labels=data.labels, mask=test_mask),
        )
    if data.n < 2:
        raise ValueError("need at least 2 rows to split")
    perm = rng.permutation(data.n)
    n_train = int(round(fraction * data.n))
    tr, te = perm[:n_train], perm[n_train:]
    return (
        Dataset(features=data.features[tr], labels=data.labels[tr]),
        Dataset(features=data.features[te], labels=data.labels[te]),
    )


def make_separable_classification(
    n: int, n_feat: int, seed, margin: float = 1.0, flip_fraction: float = 0.0
) -> Dataset:
    """Synthetic binary data with a known hyperplane; ``flip_fraction``
    mislabels that share of rows so metrics stay off their ceiling."""
    if not 0.0 <= flip_fraction < 0.5:
        raise ValueError("flip_fraction must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n_feat)
    w = w / np.linalg.norm(w)
    X = rng.standard_normal((n, n_feat))
    score = X @ w
    X = X + np.outer(np.sign(score) * margin, w)  # push rows away from the plane
    y = ((X @ w) > 0).astype(float)
    n_flip = int(round(flip_fraction * n))
    if n_flip:
        idx = rng.choice(n, size=n_flip, replace=False)
        y[idx] = 1.0 - y[idx]
    return Dataset(features=X, labels=y)


def make_lowrank_matrix(
    rows: int, cols: int, rank: int, noise: float, mask_fraction: float, seed
) -> Dataset:
    """Noisy low-rank matrix with a random observation mask."""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((rank, rows))
    V = rng.standard_normal((rank, cols))
    R = U.T @ V + noise * rng.standard_normal((rows, cols))
    mask = rng.uniform(size=R.shape) < mask_fraction
    return Dataset(features=None, labels=R, mask=mask)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "bimodal"
    model_params: dict = field(default_factory=dict)
    data_path: Optional[str] = None
    split_fraction: float = 0.7
    n_seeds: int = 1
    fw: FwConfig = field(default_factory=FwConfig)
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}, expected one of {MODEL_KINDS}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")


@dataclass
class RunSummary:
    per_seed: list[dict]
    mean: dict
    std: dict
    best_iterations: list[int]
    traces: list[BoostTrace]
    seeds: list[int]


def _aggregate(per_seed: list[dict]) -> tuple[dict, dict]:
    keys = sorted({k for m in per_seed for k in m if m[k] is not None})
    mean = {}
    std = {}
    for k in keys:
        vals = np.array([m[k] for m in per_seed if m.get(k) is not None], dtype=float)
        mean[k] = float(vals.mean())
        std[k] = float(vals.std())
    return mean, std


def _build_dataset(cfg: ExperimentConfig, seed: int) -> Optional[Dataset]:
    p = cfg.model_params
    if cfg.model == "bimodal":
        return None
    if cfg.data_path is not None:
        schema = "matrix" if cfg.model == "matrix_factorization" else "classification"
        return load_csv(cfg.data_path, schema)
    if cfg.model == "logistic":
        return make_separable_classification(
            int(p.get("n", 400)),
            int(p.get("n_features", 5)),
            seed=(seed, 9001),
            margin=float(p.get("margin", 1.0)),
            flip_fraction=float(p.get("flip_fraction", 0.0)),
        )
    return make_lowrank_matrix(
        int(p.get("rows", 20)),
        int(p.get("cols", 15)),
        int(p.get("rank", 2)),
        float(p.get("noise", 0.1)),
        float(p.get("mask_fraction", 1.0)),
        seed=(seed, 9002),
    )


def run_single_seed(cfg: ExperimentConfig, seed: int, progress=None):
    """One boosting run: returns (metrics dict, trace, posterior mixture)."""
    p = cfg.model_params
    fw = replace(cfg.fw, seed=seed, lmo=replace(cfg.fw.lmo, seed=seed))
    data = _build_dataset(cfg, seed)
    if cfg.model == "bimodal":
        model = synthetic_bimodal_target(
            mu=p.get("mu", (-1.0, 1.0)),
            sigma=p.get("sigma", (0.5, 0.5)),
            pi=p.get("pi", (0.4, 0.6)),
        )
        posterior, trace = run_boosting(model, fw, progress=progress)
        metrics = {
            "kl_oracle": trace.records[trace.best_iteration].kl_oracle,
            "train_ll": trace.records[trace.best_iteration].train_ll,
        }
        return metrics, trace, posterior
    train, test = split(data, cfg.split_fraction, seed=(seed, 777))
    if cfg.model == "logistic":
        model = logistic_regression_model(train)
    else:
        model = matrix_factorization_model(train, int(p.get("latent_dim", 2)))
    posterior, trace = run_boosting(model, fw, progress=progress)
    metrics = predictive_metrics(
        cfg.model, posterior, test, n_samples=int(p.get("metric_samples", 2048)),
        seed=(seed, 555),
    )
    metrics["train_ll"] = trace.records[trace.best_iteration].train_ll
    return metrics, trace, posterior


def run_experiment(cfg: ExperimentConfig, progress=None) -> RunSummary:
    """Run boosting for each seed, aggregate metrics, optionally write artifacts."""
    seeds = [cfg.fw.seed + k for k in range(cfg.n_seeds)]
    per_seed = []
    traces = []
    posteriors = []
    for s in seeds:
        metrics, trace, posterior = run_single_seed(cfg, s, progress=progress)
        per_seed.append(metrics)
        traces.append(trace)
        posteriors.append(posterior)
    mean, std = _aggregate(per_seed)
    summary = RunSummary(
        per_seed=per_seed,
        mean=mean,
        std=std,
        best_iterations=[t.best_iteration for t in traces],
        traces=traces,
        seeds=seeds,
    )
    if cfg.out_dir is not None:
        write_artifacts(cfg, summary)
    return summary


def _config_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved configuration snapshot (reconstructible run)."""
    fw = cfg.fw
    lmo = fw.lmo
    return {
        "model": cfg.model,
        "model_params": cfg.model_params,
        "data_path": cfg.data_path,
        "split_fraction": cfg.split_fraction,
        "n_seeds": cfg.n_seeds,
        "out_dir": cfg.out_dir,
        "fw": {
            "variant": fw.variant.value,
            "max_iters": fw.max_iters,
            "delta": fw.delta,
            "gap_tolerance": fw.gap_tolerance,
            "gap_samples": fw.gap_samples,
            "seed": fw.seed,
            "line_search_grid": fw.line_search_grid,
            "corrective_iters": fw.corrective_iters,
            "lmo": {
                "family": lmo.family.value,
                "n_mc_samples": lmo.n_mc_samples,
                "n_steps": lmo.n_steps,
                "step_size": lmo.step_size,
                "estimator": lmo.estimator.value,
                "lambda_schedule": {
                    "kind": lmo.lambda_schedule.kind,
                    "value": lmo.lambda_schedule.value,
                },
                "scale_floor": lmo.scale_floor,
                "param_box": lmo.param_box,
                "init": lmo.init.value,
                "seed": lmo.seed,
            },
        },
    }


DENSITY_GRID = QuadratureGrid(-6.0, 6.0, 601)


def write_artifacts(cfg: ExperimentConfig, summary: RunSummary) -> None:
    """Write trace.json, summary.json and, for 1-D models, density.csv."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    trace_payload = {
        "seeds": summary.seeds,
        "traces": [t.to_dict() for t in summary.traces],
    }
    with open(os.path.join(cfg.out_dir, "trace.json"), "w") as fh:
        json.dump(trace_payload, fh, indent=2, sort_keys=True)
    summary_payload = {
        "config": _config_dict(cfg),
        "per_seed": summary.per_seed,
        "aggregate": {"mean": summary.mean, "std": summary.std},
        "best_iterations": summary.best_iterations,
    }
    with open(os.path.join(cfg.out_dir, "summary.json"), "w") as fh:
        json.dump(summary_payload, fh, indent=2, sort_keys=True)
    if cfg.model == "bimodal":
        write_density_csv(cfg, summary.traces[0], os.path.join(cfg.out_dir, "density.csv"))


def write_density_csv(cfg: ExperimentConfig, trace: BoostTrace, path: str) -> None:
    p = cfg.model_params
    model = synthetic_bimodal_target(
        mu=p.get("mu", (-1.0, 1.0)),
        sigma=p.get("sigma", (0.5, 0.5)),
        pi=p.get("pi", (0.4, 0.6)),
    )
    z = DENSITY_GRID.points()
    target = np.exp(model.posterior_log_pdf(z))
    columns = [("z", z), ("target", target)]
    for i, m in enumerate(trace.mixtures):
        columns.append((f"q_{i}", np.exp(m.log_prob(z.reshape(-1, 1)))))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in columns])
        for row in zip(*(vals for _, vals in columns)):
            writer.writerow([repr(float(v)) for v in row])
