"""Desk-scale versions of the cluster-grid experiments.

Each run is a pure function of its parameters (data seed = init seed =
replicate index), so sweeps can be farmed out to worker processes and merged
in sweep order.  Results are long-format rows ``(sweep_value, replicate,
metric, value)``.
"""
from __future__ import annotations

import copy
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .datagen import ClusterGridSpec, sample_cluster_grid, test_error
from .features import FeatureKind, FeatureModel, _augment, project_h2, predict
from .trainer import (
    InitScheme,
    TrainConfig,
    TrainingError,
    default_two_layer_eta,
    init_params,
    random_feature_matrix,
    train_output_layer,
    train_two_layer,
)

FIGURES = ("test_vs_n", "test_vs_d", "margin_vs_m", "lazy")

# sweep variable and default values for each figure
DESK = {
    "test_vs_n": dict(sweep="n", values=(32, 64, 128, 256), k=3, d=5, n=256, m=200, replicates=10,
                      steps=5000, output_steps=50_000, eta=None, sigma=None, n_test=10_000),
    "test_vs_d": dict(sweep="d", values=(2, 5, 10), k=3, d=5, n=256, m=200, replicates=5,
                      steps=5000, output_steps=50_000, eta=None, sigma=None, n_test=10_000),
    "margin_vs_m": dict(sweep="m", values=(50, 200, 800), k=3, d=5, n=64, m=200, replicates=10,
                        steps=20_000, output_steps=0, eta=0.0125, sigma=None, n_test=0),
    "lazy": dict(sweep="t", values=(0, 1000, 10_000, 100_000), k=3, d=2, n=32, m=200, replicates=3,
                 steps=100_000, output_steps=0, eta=None, sigma=40.0, n_test=10_000),
}

# full-scale settings, runnable but far beyond a CI budget
FULL = {
    "test_vs_n": dict(DESK["test_vs_n"], values=(64, 128, 256, 512, 1024), d=15, m=1000,
                      replicates=20, steps=100_000, output_steps=1_000_000),
    "test_vs_d": dict(DESK["test_vs_d"], values=(5, 10, 15, 20, 25), n=256, m=1000, replicates=20,
                      steps=100_000, output_steps=1_000_000),
    "margin_vs_m": dict(DESK["margin_vs_m"], values=(10, 30, 100, 300, 1000), d=15, n=256,
                        replicates=30, steps=200_000),
    "lazy": dict(DESK["lazy"], values=(0, 1000, 10_000, 100_000, 300_000), steps=300_000),
}


@dataclass(frozen=True)
class RunParams:
    k: int
    d: int
    n: int
    m: int
    replicate: int
    steps: int
    output_steps: int = 0
    eta: float | None = None
    sigma: float | None = None
    kind: str = "relu"
    n_test: int = 10_000
    checkpoints: tuple = ()


def _data(p: RunParams):
    spec = ClusterGridSpec(p.k, p.d, seed=p.replicate)
    return spec, sample_cluster_grid(spec, p.n)


def _init(p: RunParams) -> InitScheme:
    if p.sigma is None:
        return InitScheme("balanced-sphere")
    return InitScheme("gaussian", p.sigma)


def _two_layer_config(p: RunParams, steps: int, eta: float | None) -> TrainConfig:
    kw = {"step_rule": "constant", "eta": eta} if eta is not None else {}
    return TrainConfig("two-layer", steps=steps, init=_init(p), seed=p.replicate,
                       record_every=max(1, steps), **kw)


def output_layer_classifier(cloud, a_bar):
    """Predictor x -> sum_j a_j sigma(a_j . (x, 1)) for frozen hidden weights."""
    A = cloud.weights[:, :-1]
    square = cloud.model.kind is FeatureKind.SRELU

    def f(X):
        act = np.maximum(_augment(X) @ A.T, 0.0)
        return (act ** 2 if square else act) @ a_bar

    return f


def run_two_layer(p: RunParams) -> dict:
    spec, data = _data(p)
    model = FeatureModel(p.kind, p.d)
    cloud, traj = train_two_layer(data, model, _two_layer_config(p, p.steps, p.eta), m=p.m)
    out = {"f1_margin": traj.final_margin, "beta": float(traj.beta[-1])}
    if p.n_test:
        out["test_error"] = test_error(cloud.predict, spec, p.n_test, seed=p.replicate)
    if model.kind is FeatureKind.RELU:
        out["balance_drift"] = traj.extras["balance_drift_final"]
    return out


def run_output_layer(p: RunParams) -> dict:
    spec, data = _data(p)
    model = FeatureModel(p.kind, p.d)
    cloud = init_params(_init(p), model, p.m, p.replicate)
    Z = random_feature_matrix(data, cloud)
    traj = train_output_layer(Z, TrainConfig("output-layer", steps=p.output_steps,
                                             record_every=p.output_steps), reference=False)
    out = {"margin": traj.final_margin, "beta": float(traj.beta[-1])}
    if p.n_test:
        f = output_layer_classifier(cloud, traj.extras["final_a_bar"])
        out["test_error"] = test_error(f, spec, p.n_test, seed=p.replicate)
    return out


def run_lazy(p: RunParams) -> list[tuple[int, dict]]:
    """Large-variance start with a step inversely proportional to the init scale.

    Training continues in segments so that each checkpoint ``t`` sees the
    cloud after exactly ``t`` constant-step iterations.
    """
    spec, data = _data(p)
    model = FeatureModel(p.kind, p.d)
    eta = p.eta
    if eta is None:
        eta = default_two_layer_eta(data) / (p.sigma or 1.0)
    cloud = init_params(_init(p), model, p.m, p.replicate)
    done, rows = 0, []
    for t in sorted(p.checkpoints):
        if t > done:
            cfg = TrainConfig("two-layer", steps=t - done, step_rule="constant", eta=eta,
                              init=_init(p), seed=p.replicate, record_every=t - done)
            cloud, _ = train_two_layer(data, model, cfg, cloud=cloud)
            done = t
        mu = project_h2(cloud)
        row = {"mass": mu.total_mass,
               "f1_margin": float(np.min(data.labels * predict(mu.normalized(), model, data.points)))}
        if p.n_test:
            row["test_error"] = test_error(cloud.predict, spec, p.n_test, seed=p.replicate)
        rows.append((t, row))
    return rows


def _job(which: str, value, p: RunParams):
    """One sweep point of one replicate; returns [(sweep_value, metric, value), ...]."""
    try:
        if which == "lazy":
            return [(t, k, v) for t, row in run_lazy(p) for k, v in sorted(row.items())]
        rows = []
        both = run_two_layer(p)
        if which == "margin_vs_m":
            return [(value, "f1_margin", both["f1_margin"])]
        rows.append((value, "test_error_both", both["test_error"]))
        rows.append((value, "f1_margin", both["f1_margin"]))
        out = run_output_layer(p)
        rows.append((value, "test_error_output", out["test_error"]))
        return rows
    except TrainingError as err:
        return [(value, "failed_at_step", float(err.step))]


def sweep_params(which: str, settings: dict) -> list[tuple[object, RunParams]]:
    if which not in FIGURES:
        raise ValueError(f"unknown figure {which!r}; choose from {', '.join(FIGURES)}")
    s = dict(settings)
    base = dict(k=s["k"], d=s["d"], n=s["n"], m=s["m"], steps=s["steps"],
                output_steps=s["output_steps"], eta=s["eta"], sigma=s["sigma"],
                kind=s.get("kind", "relu"), n_test=s["n_test"])
    jobs = []
    if which == "lazy":
        for r in range(s["replicates"]):
            jobs.append((None, RunParams(replicate=r, checkpoints=tuple(s["values"]), **base)))
        return jobs
    for value in s["values"]:
        for r in range(s["replicates"]):
            kw = copy.copy(base)
            kw[s["sweep"]] = int(value)
            jobs.append((value, RunParams(replicate=r, **kw)))
    return jobs


def run_sweep(which: str, settings: dict, jobs: int = 1) -> list[tuple]:
    """Rows ``(sweep_value, replicate, metric, value)`` in sweep order."""
    plan = sweep_params(which, settings)
    args = [(which, value, p) for value, p in plan]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_job, *zip(*args)))
    else:
        results = [_job(*a) for a in args]
    rows = []
    for (_, p), res in zip(plan, results):
        rows.extend((v, p.replicate, metric, val) for v, metric, val in res)
    return rows


def summarize(rows) -> dict:
    """metric -> (sweep values, q25, median, q75), sweep values sorted."""
    out = {}
    for metric in sorted({r[2] for r in rows}):
        xs = sorted({float(r[0]) for r in rows if r[2] == metric})
        q = np.array([np.percentile([r[3] for r in rows if r[2] == metric and float(r[0]) == x],
                                    [25, 50, 75]) for x in xs])
        out[metric] = (np.array(xs), q[:, 0], q[:, 1], q[:, 2])
    return out
