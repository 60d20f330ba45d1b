"""Command-line harness: ``train``, ``figure`` and ``solve``.

Options may come from a ``key = value`` file (``#`` starts a comment) given
with ``--config``; command-line flags override it.  Every output directory
receives the fully resolved ``config.txt``, which reproduces the run when
passed back through ``--config``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import experiments
from .bounds import BoundInputs, margin_bound
from .datagen import ClusterGridSpec, LabeledDataset, interclass_distance, sample_cluster_grid, test_error
from .features import FeatureModel
from .margins import SolverError, gamma1_lp, gamma1_reference, gamma2_dual
from .svg import sweep_plot
from .trainer import (
    InitScheme,
    Mode,
    TrainConfig,
    TrainingError,
    build_signed_features,
    init_params,
    random_feature_matrix,
    train_fixed_directions,
    train_output_layer,
    train_two_layer,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


def _int_list(text):
    return tuple(int(float(v)) for v in str(text).replace(" ", "").split(",") if v)


def _opt(cast):
    def parse(v):
        return None if v is None or str(v).lower() in ("", "none", "null") else cast(v)
    return parse


# key -> (parser, default); keys are snake_case, flags the kebab-case spelling
TRAIN_KEYS = {
    "mode": (str, "two-layer"),
    "k": (int, 3), "d": (int, 2), "n": (int, 20), "data_seed": (int, 0),
    "data": (_opt(str), None),
    "model": (str, "relu"), "m": (int, 100),
    "steps": (int, 10_000), "loss": (str, "exponential"),
    "step_rule": (str, "schedule"), "eta": (_opt(float), None),
    "init": (_opt(str), None), "sigma": (float, 1.0),
    "seed": (int, 0), "record_every": (int, 1000),
    "replicates": (int, 1), "n_test": (int, 10_000),
    "reference_grid": (int, 0),
    "out": (str, "runs/train"),
}

FIGURE_KEYS = {
    "which": (str, "margin_vs_m"), "preset": (str, "desk"),
    "values": (_opt(_int_list), None),
    "k": (_opt(int), None), "d": (_opt(int), None), "n": (_opt(int), None), "m": (_opt(int), None),
    "replicates": (_opt(int), None), "steps": (_opt(int), None),
    "output_steps": (_opt(int), None), "eta": (_opt(float), None), "sigma": (_opt(float), None),
    "n_test": (_opt(int), None), "model": (str, "relu"),
    "out": (str, "runs/figure"),
}

SOLVE_KEYS = {
    "what": (str, "gamma1"),
    "z": (_opt(str), None), "data": (_opt(str), None),
    "k": (int, 3), "d": (int, 2), "n": (int, 20), "data_seed": (int, 0),
    "model": (str, "relu"), "grid": (int, 1000), "seed": (int, 0),
    "r": (_opt(str), None), "strategy": (str, "exact"), "trials": (int, 1000), "basis": (_opt(str), None),
    "gamma": (_opt(float), None), "C": (_opt(float), None), "delta": (_opt(float), None),
    "rad": (_opt(float), None), "bound_n": (_opt(int), None),
    "out": (_opt(str), None),
}


# -- configuration ------------------------------------------------------------


def read_config(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(keys: dict, file_values: dict, flags: dict) -> dict:
    unknown = set(file_values) - set(keys)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = {}
    for key, (cast, default) in keys.items():
        value = flags.get(key)
        if value is None:
            value = file_values.get(key, default)
        try:
            cfg[key] = cast(value) if value is not None else None
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad value for {key}: {value!r} ({err})") from None
    return cfg


def _format(v):
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_config(cfg: dict, path) -> None:
    lines = [f"{k} = {_format(v)}" for k, v in cfg.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _add_flags(p: argparse.ArgumentParser, keys: dict, skip=()):
    for key in keys:
        if key in skip:
            continue
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar=key.upper())


def _load_dataset(cfg, seed_offset=0):
    if cfg.get("data"):
        return None, LabeledDataset.from_csv(cfg["data"])
    spec = ClusterGridSpec(cfg["k"], cfg["d"], seed=cfg["data_seed"] + seed_offset)
    return spec, sample_cluster_grid(spec, cfg["n"])


# -- train --------------------------------------------------------------------


def _train_config(cfg, rep) -> TrainConfig:
    init = None
    if cfg["init"] is not None:
        init = InitScheme(cfg["init"], cfg["sigma"])
    return TrainConfig(cfg["mode"], cfg["steps"], loss=cfg["loss"], step_rule=cfg["step_rule"],
                       eta=cfg["eta"], init=init, seed=cfg["seed"] + rep,
                       record_every=cfg["record_every"])


def train_replicate(cfg: dict, rep: int, out: Path) -> dict:
    """One replicate: trajectory CSV, certificate JSON and a summary record."""
    spec, data = _load_dataset(cfg, rep)
    tc = _train_config(cfg, rep)
    model = FeatureModel(cfg["model"], data.d)
    rdir = out / f"rep{rep:03d}"
    rdir.mkdir(parents=True, exist_ok=True)
    summary = {"replicate": rep, "mode": tc.mode.value}
    try:
        if tc.mode is Mode.TWO_LAYER:
            cloud, traj = train_two_layer(data, model, tc, m=cfg["m"])
            predictor = cloud.predict
            if model.kind.value == "relu":
                drift = float(traj.extras["balance_drift_final"])
                summary["balance_drift"] = drift
                summary["balance_drift_relative"] = drift / float(traj.beta[-1])
            if cfg["reference_grid"] > 0:
                ref = gamma1_reference(data, model, cfg["reference_grid"], seed=tc.seed)
                summary["gamma1_reference"] = ref
        else:
            hidden = init_params(InitScheme("balanced-sphere"), model, cfg["m"], tc.seed)
            if tc.mode is Mode.FIXED_DIRECTIONS:
                Z = build_signed_features(data, hidden.weights, model)
                traj = train_fixed_directions(Z.Z, tc, reference=False)
                cert = gamma1_lp(Z.Z)
                a_bar = traj.extras["final_a_bar"]
                predictor = lambda X: model.features(hidden.weights, X) @ a_bar  # noqa: E731
            else:
                Z = random_feature_matrix(data, hidden)
                traj = train_output_layer(Z.Z, tc, reference=False)
                cert = gamma2_dual(Z.Z)
                predictor = experiments.output_layer_classifier(hidden, traj.extras["final_a_bar"])
            (rdir / "certificate.json").write_text(cert.to_json(indent=2) + "\n", encoding="utf-8")
            summary["gamma"] = cert.value
            summary["rate_guarantee"] = bool(cert.separable)
            if cert.value > 0:
                summary["relative_gap"] = (cert.value - traj.final_best) / cert.value
    except TrainingError as err:
        summary["error"] = str(err)
        summary["failed_step"] = err.step
        return summary
    traj.to_csv(rdir / "trajectory.csv")
    summary.update({
        "final_margin": traj.final_margin,
        "best_margin": traj.final_best,
        "beta": float(traj.beta[-1]),
        "test_error": test_error(predictor, spec, cfg["n_test"], seed=rep) if spec is not None else None,
    })
    return summary


def cmd_train(cfg: dict, jobs: int) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _train_config(cfg, 0)  # validate before spawning anything
    FeatureModel(cfg["model"], 1)
    write_config(cfg, out / "config.txt")
    reps = range(cfg["replicates"])
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(train_replicate, [cfg] * len(reps), reps, [out] * len(reps)))
    else:
        results = [train_replicate(cfg, r, out) for r in reps]
    (out / "summary.json").write_text(json.dumps({"replicates": results}, indent=2) + "\n",
                                      encoding="utf-8")
    for r in results:
        print(json.dumps(r))
    return EXIT_NUMERIC if any("error" in r for r in results) else EXIT_OK


# -- figure -------------------------------------------------------------------

FIGURE_LABELS = {
    "test_vs_n": ("n", "test error", True),
    "test_vs_d": ("d", "test error", False),
    "margin_vs_m": ("m", "F1-margin", True),
    "lazy": ("iteration t (+1)", "value", True),
}


def figure_settings(cfg: dict) -> dict:
    which = cfg["which"]
    if which not in experiments.FIGURES:
        raise ConfigError(f"unknown figure {which!r}")
    table = {"desk": experiments.DESK, "full": experiments.FULL}.get(cfg["preset"])
    if table is None:
        raise ConfigError(f"unknown preset {cfg['preset']!r}")
    s = dict(table[which])
    for key in ("values", "k", "d", "n", "m", "replicates", "steps", "output_steps", "eta",
                "sigma", "n_test"):
        if cfg.get(key) is not None:
            s[key] = cfg[key]
    s["kind"] = cfg["model"]
    return s


def write_rows(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep_value", "replicate", "metric", "value"])
        for v, r, metric, val in rows:
            w.writerow([v, r, metric, "%.17g" % val])


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(float(v), int(r), metric, float(val)) for v, r, metric, val in reader]


def render_figure(csv_path, which: str) -> str:
    rows = read_rows(csv_path)
    xlabel, ylabel, logx = FIGURE_LABELS[which]
    summary = experiments.summarize(rows)
    if which == "lazy":
        # log axis: shift t by one so that the initial checkpoint is drawn
        summary = {k: (x + 1.0, *rest) for k, (x, *rest) in summary.items()
                   if k in ("f1_margin", "test_error")}
    else:
        summary = {k: v for k, v in summary.items() if k != "failed_at_step"}
    return sweep_plot(summary, title=which.replace("_", " "), xlabel=xlabel, ylabel=ylabel,
                      logx=logx)


def cmd_figure(cfg: dict, jobs: int) -> int:
    settings = figure_settings(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.txt")
    rows = experiments.run_sweep(cfg["which"], settings, jobs=jobs)
    csv_path = out / f"{cfg['which']}.csv"
    write_rows(rows, csv_path)
    (out / f"{cfg['which']}.svg").write_text(render_figure(csv_path, cfg["which"]), encoding="utf-8")
    medians = {k: dict(zip(x.tolist(), med.tolist()))
               for k, (x, _q1, med, _q3) in experiments.summarize(read_rows(csv_path)).items()}
    (out / "summary.json").write_text(json.dumps({"settings": {k: v for k, v in settings.items()},
                                                  "medians": medians}, indent=2, default=list) + "\n",
                                      encoding="utf-8")
    print(json.dumps(medians))
    failed = any(r[2] == "failed_at_step" for r in rows)
    return EXIT_NUMERIC if failed else EXIT_OK


# -- solve --------------------------------------------------------------------


def _read_matrix(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def cmd_solve(cfg: dict) -> int:
    what = cfg["what"]
    if what in ("gamma1", "gamma2"):
        if not cfg["z"]:
            raise ConfigError("--z is required")
        solver = gamma1_lp if what == "gamma1" else gamma2_dual
        result = solver(_read_matrix(cfg["z"])).to_dict()
    elif what == "gamma1-ref":
        _, data = _load_dataset(cfg)
        model = FeatureModel(cfg["model"], data.d)
        result = {"value": gamma1_reference(data, model, cfg["grid"], seed=cfg["seed"]),
                  "grid": cfg["grid"]}
    elif what == "delta":
        _, data = _load_dataset(cfg)
        r = data.d if cfg["r"] in (None, "d") else int(cfg["r"])
        basis = _read_matrix(cfg["basis"]) if cfg["basis"] else None
        res = interclass_distance(data, r, cfg["strategy"], basis=basis, trials=cfg["trials"],
                                  seed=cfg["seed"])
        result = {"value": res.value, "exact": res.exact, "r": r}
    elif what == "bound":
        missing = [k for k in ("gamma", "C", "delta", "bound_n") if cfg[k] is None]
        if missing:
            raise ConfigError("bound needs --gamma, --C, --delta and --n")
        result = margin_bound(BoundInputs(cfg["gamma"], cfg["C"], cfg["bound_n"], cfg["delta"],
                                          cfg["rad"])).to_dict()
    else:
        raise ConfigError(f"unknown solve target {what!r}")
    text = json.dumps(result, indent=2)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="implicit-bias",
                                     description="Train wide two-layer networks and solve margin problems.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key = value file; flags override it")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    p = sub.add_parser("train", parents=[common], help="run training replicates")
    _add_flags(p, TRAIN_KEYS)

    p = sub.add_parser("figure", parents=[common], help="run an experiment sweep")
    p.add_argument("which", nargs="?", default=None, choices=experiments.FIGURES)
    _add_flags(p, FIGURE_KEYS, skip=("which",))

    p = sub.add_parser("solve", parents=[common], help="margin solvers, Delta_r and the bound")
    p.add_argument("what", nargs="?", default=None,
                   choices=("gamma1", "gamma2", "gamma1-ref", "delta", "bound"))
    _add_flags(p, SOLVE_KEYS, skip=("what", "bound_n", "n"))
    # --n is the sample size both for generated data and for the bound
    p.add_argument("--n", dest="n", default=None, metavar="N")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    keys = {"train": TRAIN_KEYS, "figure": FIGURE_KEYS, "solve": SOLVE_KEYS}[args.command]
    flags = {k: v for k, v in vars(args).items() if k in keys}
    try:
        file_values = read_config(args.config) if args.config else {}
        if args.command == "solve" and flags.get("n") is not None:
            flags["bound_n"] = flags["n"]
        cfg = resolve(keys, file_values, flags)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "train":
            return cmd_train(cfg, args.jobs)
        if args.command == "figure":
            return cmd_figure(cfg, args.jobs)
        return cmd_solve(cfg)
    except (SolverError, TrainingError, ArithmeticError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
