"""Command line entry point: ``locabench <command> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from . import harness
from .config import ExperimentConfig


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_ini(args.config)
    if args.full_scale:
        cfg = cfg.full_scale()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.runs is not None:
        cfg = cfg.replace(runs=args.runs)
    return cfg.validate()


def _seeds(cfg: ExperimentConfig) -> list[int]:
    return [cfg.seed + i for i in range(cfg.runs)]


def _read_baselines(path) -> dict[int, float]:
    with open(path, encoding="utf-8") as fh:
        return {int(k): float(v) for k, v in json.load(fh).items()}


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _verdict_dict(records, baselines, cfg: ExperimentConfig | None = None) -> dict:
    threshold = cfg.verdict_threshold if cfg else 0.8
    window = cfg.window if cfg else 5
    v = harness.adaptivity_verdict(records, baselines, threshold, window)
    return {"verdict": v.kind.value, "ratios": {str(k): r for k, r in v.ratios.items()},
            "short_window": v.short_window}


def cmd_run(args) -> int:
    cfg = _load(args)
    runs = harness.run_seeds(cfg, _seeds(cfg))
    out = args.out or cfg.output or f"{cfg.agent}_{cfg.domain}.csv"
    harness.export_csv(runs, out, cfg.agent, cfg.domain)
    print(f"wrote {out}")
    if args.baselines:
        avg = harness.average_records(runs)
        _write_json(_verdict_dict(avg, _read_baselines(args.baselines), cfg), None)
    return 0


def cmd_grid(args) -> int:
    cfg = _load(args)
    if not cfg.grid:
        print("config has no [grid] section", file=sys.stderr)
        return 2
    baselines = _read_baselines(args.baselines) if args.baselines else None
    res = harness.grid_search(cfg, cfg.grid, _seeds(cfg), baselines, cfg.selection_threshold, cfg.window,
                              cfg.workers)
    summary = {
        "best": res.best,
        "flagged": res.flagged,
        "results": [{k: r[k] for k in ("setting", "phase1_ratio", "phase2_mean", "phase2_ratio")}
                    for r in res.results],
    }
    _write_json(summary, args.out)
    return 0


def cmd_baseline(args) -> int:
    cfg = _load(args)
    baselines = harness.phase_baselines(cfg, cfg.seed)
    _write_json({str(k): v for k, v in baselines.items()}, args.out)
    return 0


def cmd_verdict(args) -> int:
    runs, agent, domain = harness.read_csv(args.csv)
    cfg = None
    if args.baselines:
        baselines = _read_baselines(args.baselines)
    elif args.config:
        cfg = ExperimentConfig.from_ini(args.config)
        baselines = harness.phase_baselines(cfg, cfg.seed)
    else:
        print("verdict needs --baselines or --config", file=sys.stderr)
        return 2
    result = _verdict_dict(harness.average_records(runs), baselines, cfg)
    result.update(agent=agent, domain=domain, seeds=sorted(runs))
    _write_json(result, args.out)
    return 0


def cmd_export_plotdata(args) -> int:
    runs, _, _ = harness.read_csv(args.csv)
    rows = harness.plot_data(runs)
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["step", "phase", "mean", "stderr", "n"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locabench", description="LoCA adaptivity experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--full-scale", action="store_true")
        p.add_argument("--out")
        p.set_defaults(func=func)
        return p

    with_config("run", cmd_run, "run one experiment over several seeds").add_argument(
        "--baselines", help="JSON file of per-phase baselines; prints a verdict")
    with_config("grid", cmd_grid, "hyperparameter grid search").add_argument(
        "--baselines", help="JSON file of per-phase baselines")
    with_config("baseline", cmd_baseline, "compute per-phase optimal baselines")

    p = sub.add_parser("verdict", help="classify results from a CSV")
    p.add_argument("csv")
    p.add_argument("--baselines")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verdict)

    p = sub.add_parser("export-plotdata", help="per-phase mean and stderr curves")
    p.add_argument("csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
