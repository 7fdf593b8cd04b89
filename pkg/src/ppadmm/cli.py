"""Command-line entry point: ``ppadmm {preprocess,run,analyze,attack,plot}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, data, experiment, model
from .engine import initial_primal, run
from .errors import ConfigError, PPADMMError

log = logging.getLogger("ppadmm")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_preprocess(args) -> int:
    cfg_path = Path(args.config)
    block = _read_json(cfg_path).get("preprocess", {})
    base = cfg_path.resolve().parent
    try:
        schema = data.Schema.load(base / block["schema"])
        raw = data.RawTable.read_csv(base / block["input"], schema)
    except KeyError as exc:
        raise ConfigError(f"preprocess block needs {exc}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, PPADMMError):
            raise
        raise ConfigError(f"bad schema: {exc}") from exc
    ds, columns = data.preprocess(raw, return_columns=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.write_dataset(ds, out / "dataset.csv")
    report = {"input_rows": len(raw.rows), "samples": ds.B, "dimension": ds.d, "columns": columns}
    if block.get("compare_reference", False):
        report["reference"] = data.compare_with_reference(ds)
    _write_json(out / "preprocess_report.json", report)
    print(f"{ds.B} samples x {ds.d} features -> {out / 'dataset.csv'}")
    return 0


def cmd_run(args) -> int:
    cfg = experiment.load_config(args.config, seed=args.seed)
    summary = experiment.run_experiment(cfg, args.out, plots=not args.no_plots, run_workers=args.run_workers)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_analyze(args) -> int:
    from . import plotting

    cfg = experiment.load_config(args.config, seed=args.seed)
    if cfg.mechanism != "none":
        raise ConfigError("analyze certifies non-private runs; set mechanism to 'none'")
    opts = cfg.raw.get("analysis", {})
    mu = float(opts.get("mu", 2.0))
    experiment.validate(cfg)
    N, d = cfg.net.n_nodes, cfg.datasets[0].d
    s = experiment.run_seed(cfg.seed, 0)
    tr = run(cfg.net, cfg.datasets, cfg.erm, cfg.schedule, "none", None, cfg.T, s,
             f0=initial_primal(N, d, s, cfg.init_scale), tol=cfg.inner_tol, check=False)
    fstar = model.centralized_solve(cfg.datasets, cfg.erm, tol=float(opts.get("oracle_tol", 1e-12)))
    rows = analysis.contraction_certificate(tr, fstar, cfg.net, cfg.erm, cfg.datasets, mu=mu)
    Y = analysis.recover_Y(tr.lam[-1], cfg.net)
    resid = analysis.optimality_residual(tr.f[-1], Y, cfg.datasets, cfg.erm, cfg.net)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.certificate_to_csv(rows, out / "certificate.csv")
    summary = {
        "iterations": cfg.T,
        "mu": mu,
        "violations": [r.t for r in rows if not r.holds],
        "delta_min": min(r.delta for r in rows),
        "delta_max": max(r.delta for r in rows),
        "final_stationarity": resid["stationarity"],
        "final_consensus": resid["consensus"],
        "distance_to_optimum": float(np.linalg.norm(tr.f[-1] - fstar, axis=1).max()),
        "config_digest": cfg.digest,
    }
    _write_json(out / "analysis_summary.json", summary)
    if not args.no_plots:
        plotting.certificate_plot(rows, out / "figures" / "certificate.png")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_attack(args) -> int:
    cfg = experiment.load_config(args.config, seed=args.seed)
    if cfg.mechanism != "pp":
        raise ConfigError("attack runs on penalty-perturbed traces; set mechanism to 'pp'")
    opts = cfg.raw.get("attack", {})
    node = int(opts.get("node", 0))
    withhold = bool(opts.get("withhold_schedule", False))
    experiment.validate(cfg)
    N, d = cfg.net.n_nodes, cfg.datasets[0].d
    s = experiment.run_seed(cfg.seed, 0)
    tr = run(cfg.net, cfg.datasets, cfg.erm, cfg.schedule, "pp", cfg.noise, cfg.T, s,
             f0=initial_primal(N, d, s, cfg.init_scale), tol=cfg.inner_tol, check=False)
    target = cfg.datasets[node]
    known = model.LabeledDataset(target.features[1:], target.labels[1:])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"node": node, "iterations": cfg.T, "schedule_known": not withhold, "config_digest": cfg.digest}
    try:
        res = analysis.attack_reconstruct(
            tr, cfg.net, node, known, cfg.erm,
            None if withhold else tr.eta[1:, node], None if withhold else float(tr.theta[node]),
        )
    except analysis.UnknownSchedule as exc:
        summary.update({"outcome": "UnknownSchedule", "message": str(exc)})
    else:
        analysis.attack_to_csv(res, out / "attack.csv")
        summary.update({
            "outcome": "estimate",
            "abs_cosine": analysis.abs_cosine(res["estimate"], target.features[0]),
            "estimate": [float(v) for v in res["estimate"]],
        })
    _write_json(out / "attack_summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    from . import plotting

    labels = args.labels or [Path(d).name for d in args.runs]
    if len(labels) != len(args.runs):
        raise ConfigError("need one label per run directory")
    for p in plotting.compare_runs(args.runs, labels, Path(args.out)):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppadmm", description="Private consensus ADMM laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, plots=True):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if plots:
            p.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    p = sub.add_parser("preprocess", help="clean and normalize a census-style CSV")
    common(p, plots=False)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("run", help="run a multi-run experiment")
    common(p)
    p.add_argument("--run-workers", type=int, default=1, help="threads across independent runs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="contraction certificate and rate bounds on a non-private run")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("attack", help="reconstruct a hidden sample from a penalty-perturbed run")
    common(p, plots=False)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("plot", help="overlay several run outputs")
    p.add_argument("runs", nargs="+", help="run output directories")
    p.add_argument("--labels", nargs="*")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PPADMMError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("violations", "nodes"):
            if hasattr(exc, attr):
                err[attr] = [str(v) if not isinstance(v, int) else v for v in getattr(exc, attr)]
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
