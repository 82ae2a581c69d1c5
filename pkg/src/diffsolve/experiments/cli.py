"""Command-line entry points: run, sweep, savings, plot, gen-data."""

import argparse
import configparser
import dataclasses
import json
import os
import sys

import numpy as np

from ..networks import NetworkParams, save_checkpoint
from .config import load_config, mode_kind
from .data import build_dataset, load_dataset, save_dataset
from .records import read_summary_json, save_record, write_summary_json
from .runners import run_scenario
from .savings import compute_savings

_NO_DATASET = ("poisson_inverse_1p", "poisson_inverse_3p")


def default_dataset_path(cfg):
    return os.path.join("data", f"{cfg.scenario}_seed{cfg.data_seed}.npz")


def _load_cfg(path, mode=None, seeds=None):
    cfg = load_config(path)
    updates = {}
    if mode is not None:
        updates["mode"] = mode
    if seeds is not None:
        updates["seeds"] = tuple(int(s) for s in seeds.split(",") if s.strip())
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def _dataset_for(cfg, config_path):
    if cfg.scenario in _NO_DATASET:
        return None
    path = cfg.dataset_path or default_dataset_path(cfg)
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"dataset {path} not found; generate it first: diffsolve gen-data {config_path}"
        )
    return load_dataset(path)


def _save_params(path, params):
    if isinstance(params, NetworkParams):
        save_checkpoint(path, params)


def _persist(records, cfg, out):
    paths = []
    per_seed = {}
    for rec in records:
        paths.append(save_record(out, rec, save_params=_save_params))
        per_seed[str(rec.seed)] = rec.summary
    run_path = os.path.dirname(paths[0])
    top = {
        "scenario": cfg.scenario,
        "mode": cfg.mode,
        "seeds": [int(s) for s in cfg.seeds],
        "K_cap": int(cfg.prdp.K_cap),
        "runs": per_seed,
        "mean_final_val": float(np.mean([s["final_val"] for s in per_seed.values()])),
        "mean_total_iterations": float(np.mean([s["total_iterations"] for s in per_seed.values()])),
    }
    write_summary_json(os.path.join(run_path, "summary.json"), top)
    return run_path


def _cmd_run(args):
    cfg = _load_cfg(args.config, mode=args.mode, seeds=args.seeds)
    dataset = _dataset_for(cfg, args.config)
    records = run_scenario(cfg, dataset)
    run_path = _persist(records, cfg, args.out)
    for rec in records:
        status = "FAILED" if rec.failed else "ok"
        print(
            f"seed {rec.seed}: {status}  final={rec.summary['final_val']:.6g}  "
            f"iterations={rec.summary['total_iterations']}  K_final={rec.summary['K_final']}"
        )
    print(f"wrote {run_path}")
    return 0


def _cmd_sweep(args):
    cfg = _load_cfg(args.config, seeds=args.seeds)
    ks = [int(k) for k in args.K_list.split(",") if k.strip()]
    if not ks:
        raise ValueError("--K-list is empty")
    dataset = _dataset_for(cfg, args.config)
    for k in ks:
        sub = dataclasses.replace(cfg, mode=f"fixed:{k}")
        records = run_scenario(sub, dataset)
        _persist(records, sub, args.out)
        final = np.mean([r.summary["final_val"] for r in records])
        print(f"K={k}: mean final metric {final:.6g}")
    return 0


def _cmd_savings(args):
    prdp = read_summary_json(os.path.join(args.prdp_run, "summary.json"))
    base = read_summary_json(os.path.join(args.baseline_run, "summary.json"))
    if prdp["scenario"] != base["scenario"]:
        raise ValueError("runs come from different scenarios")
    if mode_kind(base["mode"])[0] != "converged":
        raise ValueError("baseline run must use converged mode")
    if sorted(prdp["runs"]) != sorted(base["runs"]):
        raise ValueError("runs cover different seed sets")
    per_seed = {}
    for seed in sorted(prdp["runs"], key=int):
        pr, ic, total = compute_savings(prdp["runs"][seed], base["runs"][seed])
        per_seed[seed] = {"pr": pr, "ic": ic, "total": total}
        print(f"seed {seed}: PR {pr:.1f}%  IC {ic:.1f}%  total {total:.1f}%")
    mean = {
        key: float(np.mean([v[key] for v in per_seed.values()])) for key in ("pr", "ic", "total")
    }
    print(f"mean:   PR {mean['pr']:.1f}%  IC {mean['ic']:.1f}%  total {mean['total']:.1f}%")
    out = {"per_seed": per_seed, "mean": mean, "baseline": args.baseline_run}
    write_summary_json(os.path.join(args.prdp_run, "savings.json"), out)
    return 0


def _cmd_plot(args):
    from .plots import plot_run

    for path in plot_run(args.run_dir, args.out):
        print(f"wrote {path}")
    return 0


def _cmd_gen_data(args):
    cfg = _load_cfg(args.config)
    if cfg.scenario in _NO_DATASET:
        raise ValueError(f"{cfg.scenario} takes no dataset")
    path = cfg.dataset_path or default_dataset_path(cfg)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    dataset = build_dataset(cfg)
    save_dataset(path, dataset)
    print(f"wrote {path}: trajectories {dataset.trajectories.shape}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="diffsolve", description="training-lab experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one config")
    p.add_argument("config")
    p.add_argument("--mode", default=None, help="prdp, converged, or fixed:<K>")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--out", default="runs")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="fixed-K sweep over one config")
    p.add_argument("config")
    p.add_argument("--K-list", dest="K_list", required=True)
    p.add_argument("--seeds", default=None)
    p.add_argument("--out", default="runs")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("savings", help="savings of a run against its converged baseline")
    p.add_argument("prdp_run")
    p.add_argument("baseline_run")
    p.set_defaults(fn=_cmd_savings)

    p = sub.add_parser("plot", help="SVG charts from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", default="charts")
    p.set_defaults(fn=_cmd_plot)

    p = sub.add_parser("gen-data", help="generate a config's reference dataset")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_gen_data)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
