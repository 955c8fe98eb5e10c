"""Command-line entry point: ``openset-da {adapt,baseline,sweep,split,synth,check}``.

Exit codes: 1 configuration, 2 I/O or data, 3 infeasible assignment,
4 numerical failure, 5 ``check`` found a disagreement.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .assign import load_instance, solve_locality, solve_semi_supervised, solve_unsupervised
from .ati import AtiConfig, history_to_csv, parse_variant
from .dataset import (
    AffineShift,
    ClassCatalog,
    Dataset,
    load_features,
    load_ground_truth,
    make_open_set_split,
    save_features,
    save_ground_truth,
    subsample,
    synth_shift,
    truth_labels,
)
from .errors import ConfigError, DatasetError, OpenSetDAError
from .evaluate import parse_protocol
from .oracle import InstanceTooLarge, brute_force_assignment
from .pipeline import adapt_and_classify, baseline
from .svm import SvmConfig

log = logging.getLogger("openset_da")

SWEEP_VARS = {
    "rho": "rho",
    "n_targets": "n_targets",
    "unknown_ratio": "synth_unknown_ratio",
    "seed": "seed",
}


# --- data assembly ------------------------------------------------------------

def load_run_data(cfg: cfgmod.RunConfig):
    """(source, target, catalog, truth-or-None) for a resolved config."""
    if cfg.data == "synthetic":
        shift = AffineShift.rotation_translation(cfg.synth_dim, cfg.synth_rotation,
                                                 cfg.synth_translation, seed=cfg.seed)
        source, target, gt = synth_shift(
            cfg.synth_classes, cfg.synth_per_class, cfg.synth_dim, shift,
            cfg.synth_unknown_ratio, seed=cfg.seed, scale=cfg.synth_scale,
            n_source_unknown=cfg.synth_source_unknown,
            n_target_unknown=cfg.synth_target_unknown,
            unknown_radius=cfg.synth_unknown_radius)
    else:
        source = load_features(cfg.source, "source")
        target = load_features(cfg.target, "target")
        gt = load_ground_truth(cfg.ground_truth) if cfg.ground_truth else None
    catalog = ClassCatalog.from_labels(source.labels)
    if cfg.labeled_targets:
        marks = load_ground_truth(cfg.labeled_targets)
        unknown_ids = set(marks) - set(target.ids)
        if unknown_ids:
            raise DatasetError(f"labeled-target ids not in target file: {sorted(unknown_ids)[:5]}")
        target = target.with_labels([marks.get(i, l) for i, l in zip(target.ids, target.labels)])
    target.validate(catalog)
    if cfg.n_targets:
        target = subsample(target, total=cfg.n_targets, seed=cfg.seed)
    truth = truth_labels(target, gt, catalog) if gt is not None else None
    return source, target, catalog, truth


def ati_config(cfg: cfgmod.RunConfig) -> AtiConfig:
    variant, k = parse_variant(cfg.variant)
    return AtiConfig(variant=variant, rho=cfg.rho, neighbor_k=k, epsilon=cfg.epsilon,
                     max_iterations=cfg.max_iter, coverage=cfg.coverage,
                     coverage_unknown=cfg.coverage_unknown, backend=cfg.backend,
                     stop_on_fixed_point=cfg.stop_on_fixed_point, seed=cfg.seed)


def svm_config(cfg: cfgmod.RunConfig) -> SvmConfig:
    return SvmConfig(c_param=cfg.svm_c, tolerance=cfg.svm_tol, max_passes=cfg.svm_max_passes,
                     seed=cfg.seed)


def manifest_header() -> list[str]:
    import numba
    import scipy
    return [f"openset-da {__version__}", f"python {platform.python_version()}",
            f"numpy {np.__version__}", f"scipy {scipy.__version__}", f"numba {numba.__version__}"]


def _write_predictions(path: Path, target: Dataset, pred) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i, p in zip(target.ids, pred):
            w.writerow([i, p])


def _write_report(out: Path, report, plot_data: bool) -> None:
    report.to_json(out / "report.json")
    report.confusion_to_csv(out / "confusion.csv")
    if plot_data:
        report.confusion_to_plot_data(out / "confusion.dat")


# --- commands --------------------------------------------------------------------

def run_adapt(cfg: cfgmod.RunConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.cfg").write_text(cfgmod.dump(cfg, manifest_header()))
    protocol = parse_protocol(cfg.protocol)
    t0 = time.perf_counter()
    source, target, catalog, truth = load_run_data(cfg)
    run = adapt_and_classify(source, target, catalog, ati_config(cfg), svm_config(cfg),
                             truth, protocol)
    wall = time.perf_counter() - t0
    res = run.ati
    save_features(res.adapted, out / "adapted_source.csv")
    res.transform.to_json(out / "transform.json")
    history_to_csv(res.history, out / "history.csv")
    run.model.to_json(out / "model.json")
    _write_predictions(out / "predictions.csv", target, run.predictions)
    summary = {
        "iterations": len(res.history),
        "stop_reason": res.stop_reason,
        "rejected_fraction": res.history[-1].n_outliers / len(target),
        "overall_accuracy": None,
        "mean_class_accuracy": None,
    }
    if run.report is not None:
        _write_report(out, run.report, cfg.plot_data)
        summary["overall_accuracy"] = run.report.overall_accuracy
        summary["mean_class_accuracy"] = run.report.mean_class_accuracy
    # wall time is machine dependent and kept apart from the reproducible outputs
    (out / "timing.json").write_text(json.dumps({"wall_seconds": wall}) + "\n")
    log.info("adapt: %d iterations (%s), accuracy %s", summary["iterations"],
             res.stop_reason, summary["overall_accuracy"])
    return summary


def run_baseline(cfg: cfgmod.RunConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.cfg").write_text(cfgmod.dump(cfg, manifest_header()))
    source, target, catalog, truth = load_run_data(cfg)
    run = baseline(source, target, catalog, svm_config(cfg), cfg.baseline_mode, truth,
                   parse_protocol(cfg.protocol))
    run.model.to_json(out / "model.json")
    _write_predictions(out / "predictions.csv", target, run.predictions)
    summary = {"overall_accuracy": None, "mean_class_accuracy": None}
    if run.report is not None:
        _write_report(out, run.report, cfg.plot_data)
        summary["overall_accuracy"] = run.report.overall_accuracy
        summary["mean_class_accuracy"] = run.report.mean_class_accuracy
    return summary


def _sweep_job(args):
    cfg, point, seed = args
    summary = run_adapt(cfg)
    return point, seed, summary


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def run_sweep(cfg: cfgmod.RunConfig, var: str, values: list, seeds: list[int], jobs: int = 1):
    if var not in SWEEP_VARS:
        raise ConfigError(f"sweep variable must be one of {sorted(SWEEP_VARS)}")
    key = SWEEP_VARS[var]
    if var == "unknown_ratio" and cfg.data != "synthetic":
        raise ConfigError("unknown_ratio sweeps need synthetic data")
    types = cfgmod.field_types()
    values = [cfgmod._coerce(key, types[key], str(v)) for v in values]
    if not values:
        raise ConfigError("empty sweep grid")
    base = Path(cfg.out)
    tasks = []
    for v in values:
        for s in ([v] if var == "seed" else seeds):
            sub = base / f"{var}={_fmt(v)}" / f"seed={s}"
            run_cfg = cfgmod.replace(cfg, **{key: v, "seed": int(s), "out": str(sub)})
            tasks.append((run_cfg, v, s))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_job, tasks))
    else:
        results = [_sweep_job(t) for t in tasks]
    base.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in values:
        runs = [r for p, _, r in results if p == v]
        acc = np.array([r["overall_accuracy"] for r in runs if r["overall_accuracy"] is not None])
        rej = np.array([r["rejected_fraction"] for r in runs])
        its = np.array([r["iterations"] for r in runs])
        row = {"var": var, "value": _fmt(v), "n_runs": len(runs)}
        if len(acc):
            row.update(acc_mean=acc.mean(), acc_std=acc.std(ddof=1) if len(acc) > 1 else 0.0,
                       acc_min=acc.min(), acc_max=acc.max())
        row.update(rejected_pct=100.0 * rej.mean(), iterations_mean=its.mean())
        rows.append(row)
    cols = ["var", "value", "n_runs", "acc_mean", "acc_std", "acc_min", "acc_max",
            "rejected_pct", "iterations_mean"]
    with (base / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, cols, lineterminator="\n", restval="")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) if isinstance(v, (float, np.floating)) else v
                        for k, v in row.items()})
    return rows


def run_check(path) -> bool:
    inst = load_instance(path)
    d, scfg = inst["costs"], inst["cfg"]
    if inst["dcc"] is not None:
        mine = solve_locality(d, inst["dcc"], inst["neighbors"],
                              replace(scfg, backend="exact"))
    elif scfg.fixed_labels:
        mine = solve_semi_supervised(d, scfg)
    else:
        mine = solve_unsupervised(d, scfg)
    _, ref = brute_force_assignment(d, scfg.lam, scfg.coverage, scfg.fixed_labels,
                                    inst["dcc"], inst["neighbors"], scfg.coverage_skip)
    ok = abs(mine.objective - ref) <= 1e-9 * max(1.0, abs(ref))
    print(f"solver objective   {mine.objective!r}")
    print(f"brute-force optimum {ref!r}")
    given = inst["assignment"]
    if given is not None:
        per_t = given.x.sum(axis=0) + given.o
        feasible = bool(np.all(per_t == 1))
        if scfg.coverage:
            skip = set(scfg.coverage_skip)
            feasible &= all(given.x[c].sum() >= 1 for c in range(d.shape[0]) if c not in skip)
        g_opt = abs(given.objective - ref) <= 1e-9 * max(1.0, abs(ref))
        print(f"dumped solution: feasible={feasible} optimal={g_opt}")
        ok = ok and feasible and g_opt
    print("OK" if ok else "MISMATCH")
    return ok


# --- argument parsing -------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="key = value config file or manifest")
    p.add_argument("--variant", choices=["ati", "ati-lambda", "ati-lambda-n1", "ati-lambda-n2"])
    p.add_argument("--rho", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--svm-c", type=float, dest="svm_c")
    p.add_argument("--protocol", choices=["cs", "os", "os-star"])
    p.add_argument("--seed", type=int)
    p.add_argument("--labeled-targets", dest="labeled_targets")
    p.add_argument("--out")
    p.add_argument("--plot-data", action="store_const", const=True, dest="plot_data")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")


def _resolve(args) -> cfgmod.RunConfig:
    over = {k: getattr(args, k) for k in ("variant", "rho", "epsilon", "max_iter", "svm_c",
                                          "protocol", "seed", "labeled_targets", "out",
                                          "plot_data")}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v.strip()
    if getattr(args, "mode", None):
        over["baseline_mode"] = args.mode
    return cfgmod.load(args.config, over)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="openset-da", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("adapt", help="run ATI end to end")
    _add_run_flags(p)

    p = sub.add_parser("baseline", help="linear SVMs without adaptation")
    _add_run_flags(p)
    p.add_argument("--mode", choices=["s", "st", "t"])

    p = sub.add_parser("sweep", help="grid over one variable x seeds")
    _add_run_flags(p)
    p.add_argument("--var", required=True, choices=sorted(SWEEP_VARS))
    p.add_argument("--values", required=True, help="comma separated grid")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("split", help="build an open-set source/target split from labeled pools")
    p.add_argument("pool")
    p.add_argument("--target-pool")
    p.add_argument("--shared", type=int, default=10)
    p.add_argument("--src-unknown", default="11-20")
    p.add_argument("--tgt-unknown", default="21-31")
    p.add_argument("--source-per-class", type=int)
    p.add_argument("--target-per-class", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="split")

    p = sub.add_parser("synth", help="write a synthetic shifted source/target pair")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--rotation", type=float, default=20.0)
    p.add_argument("--translation", type=float, default=5.0)
    p.add_argument("--unknown-ratio", type=float, default=0.5)
    p.add_argument("--scale", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth")

    p = sub.add_parser("check", help="verify a dumped assignment instance against brute force")
    p.add_argument("instance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "adapt":
            summary = run_adapt(_resolve(args))
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "baseline":
            summary = run_baseline(_resolve(args))
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "sweep":
            cfg = _resolve(args)
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            rows = run_sweep(cfg, args.var, values, seeds, args.jobs)
            for row in rows:
                print(json.dumps({k: (float(v) if isinstance(v, (np.floating,)) else v)
                                  for k, v in row.items()}))
        elif args.command == "split":
            pool = load_features(args.pool, "source")
            tpool = load_features(args.target_pool, "source") if args.target_pool else None
            source, target, truth = make_open_set_split(
                pool, args.shared, args.src_unknown, args.tgt_unknown, args.seed, tpool,
                args.source_per_class, args.target_per_class)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            save_features(source, out / "source.csv")
            save_features(target, out / "target.csv")
            save_ground_truth(truth, out / "ground_truth.csv")
            print(f"source {len(source)} rows, target {len(target)} rows -> {out}")
        elif args.command == "synth":
            shift = AffineShift.rotation_translation(args.dim, args.rotation, args.translation,
                                                     seed=args.seed)
            source, target, truth = synth_shift(args.classes, args.per_class, args.dim, shift,
                                                args.unknown_ratio, seed=args.seed,
                                                scale=args.scale)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            save_features(source, out / "source.csv")
            save_features(target, out / "target.csv")
            save_ground_truth(truth, out / "ground_truth.csv")
            print(f"source {len(source)} rows, target {len(target)} rows -> {out}")
        elif args.command == "check":
            return 0 if run_check(args.instance) else 5
    except OpenSetDAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except InstanceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
