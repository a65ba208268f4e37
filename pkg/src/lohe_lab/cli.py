"""Command line entry point: ``lohe-lab run | verify | sweep``.

Exit codes: 0 when every requested check passes, 1 when a check fails (or a
run breaks down numerically), 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, parse_config, resolve_config_path, run_config
from .ensemble import save_ensemble
from .integrate import IntegrationError, TrajectoryRecord
from .suites import SUITES, run_suite

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEED_ENV = "LOHE_LAB_SEED"
SWEEP_AXES = ("kappa2", "epsilon", "DH")


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


def trajectory_csv(traj: TrajectoryRecord) -> str:
    cols = traj.columns()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(cols))
    for i in range(len(traj)):
        w.writerow([_fmt(v[i]) for v in cols.values()])
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _seed_override() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        seed = int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None
    if seed < 0:
        raise UsageError(f"{SEED_ENV} must be nonnegative")
    return seed


def _final_row(traj: TrajectoryRecord) -> dict:
    return {k: float(v[-1]) for k, v in traj.columns().items()}


# -- run --------------------------------------------------------------------------


def cmd_run(config: str, out_dir: Path) -> int:
    try:
        cfg = load_config(config)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    seed = _seed_override()
    if seed is not None:
        cfg = cfg.with_seed(seed)
    try:
        result = run_config(cfg)
    except IntegrationError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None

    traj = result.trajectory
    out_dir.mkdir(parents=True, exist_ok=True)
    outs = cfg.outputs
    if outs["csv"]:
        (out_dir / outs["csv"]).write_text(trajectory_csv(traj), encoding="utf-8")
    if outs["snapshot"]:
        save_ensemble(traj.final, out_dir / outs["snapshot"])
    report = {
        "command": "run",
        "config": cfg.to_dict(),
        "rows": len(traj),
        "final": _final_row(traj),
        "verdicts": [v.to_dict() for v in result.verdicts],
        "refused": result.refusals,
        "passed": result.passed and not result.refusals,
    }
    if outs["report"]:
        (out_dir / outs["report"]).write_text(_dump(report), encoding="utf-8")
    _print_verdicts(result.verdicts)
    for name, why in result.refusals.items():
        print(f"REFUSED {name}: {why}", file=sys.stderr)
    if result.refusals:
        return EXIT_USAGE
    return EXIT_PASS if result.passed else EXIT_FAIL


def _print_verdicts(verdicts) -> None:
    for v in verdicts:
        status = "PASS" if v.passed else "FAIL"
        print(f"{status}  {v.name:<48} observed={v.observed:.6e}  bound={v.bound:.6e}")


# -- verify -----------------------------------------------------------------------


def cmd_verify(suite: str, out_dir: Path) -> int:
    if suite != "all" and suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(list(SUITES) + ['all'])}")
    verdicts = run_suite(suite)
    passed = all(v.passed for v in verdicts)
    _print_verdicts(verdicts)
    print(f"{sum(v.passed for v in verdicts)}/{len(verdicts)} passed")
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"command": "verify", "suite": suite, "passed": passed, "verdicts": [v.to_dict() for v in verdicts]}
    (out_dir / f"verify_{suite}.json").write_text(_dump(report), encoding="utf-8")
    return EXIT_PASS if passed else EXIT_FAIL


# -- sweep ------------------------------------------------------------------------


def _apply_cell(base: RunConfig, cell: dict) -> RunConfig:
    cfg = parse_config(base.to_json(), base_dir=base.base_dir)
    if "kappa2" in cell:
        kappas = list(cfg.model["kappas"])
        kappas = (kappas + [0.0])[:1] + [cell["kappa2"]] + kappas[2:]
        cfg.model.update(kind="polynomial", kappas=kappas, m=len(kappas))
    if "epsilon" in cell:
        cfg.init = {k: v for k, v in cfg.init.items() if k != "diameter_sq"}
        cfg.init.update(type="perturbed", epsilon=cell["epsilon"])
        cfg.init.setdefault("seed", 0)
    if "DH" in cell:
        ham = cfg.model["hamiltonian"]
        if ham["type"] != "perturbed":
            ham = {"type": "perturbed", "seed": cfg.init.get("seed", 0), "base_seed": 0, "base_norm": 1.0}
        ham["target_DH"] = cell["DH"]
        cfg.model["hamiltonian"] = ham
    return cfg


def _sweep_cell(job) -> list[str]:
    index, base, cell, checks = job
    cfg = _apply_cell(base, cell)
    row = [str(index)] + [_fmt(cell[a]) if a in cell else "" for a in SWEEP_AXES]
    try:
        result = run_config(cfg)
    except (IntegrationError, ValueError) as exc:
        return row + [""] * len(TrajectoryRecord.COLUMNS) + ["error"] * len(checks) + [str(exc)]
    final = _final_row(result.trajectory)
    row += [_fmt(final[c]) for c in TrajectoryRecord.COLUMNS]
    for c in checks:
        if c in result.refusals:
            row.append("n/a")
        else:
            row.append("pass" if all(v.passed for v in result.by_check[c]) else "fail")
    return row + [""]


def _load_sweep(path: str) -> tuple[RunConfig, list[dict], str]:
    p = resolve_config_path(path)
    text = p.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", str(p), exc.lineno) from None
    if not isinstance(data, dict) or "base" not in data:
        raise ConfigError("sweep config needs a 'base' run config", str(p), 1)
    if isinstance(data["base"], str):
        base_path = data["base"] if Path(data["base"]).is_absolute() else str(p.parent / data["base"])
        try:
            base = load_config(base_path if Path(base_path).exists() else data["base"])
        except FileNotFoundError as exc:
            raise ConfigError(str(exc), str(p), 1) from None
    else:
        base = parse_config(json.dumps(data["base"], indent=2), f"{p}#base", p.parent)
    axes = data.get("axes", {})
    if not isinstance(axes, dict):
        raise ConfigError("axes must be an object", str(p), 1)
    for key, values in axes.items():
        if key not in SWEEP_AXES:
            raise ConfigError(f"unknown axis {key!r}; choose from {', '.join(SWEEP_AXES)}", str(p), 1)
        if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
        ):
            raise ConfigError(f"axis {key} must be a list of numbers", str(p), 1)
    names = [a for a in SWEEP_AXES if a in axes]
    grid = [dict(zip(names, combo)) for combo in itertools.product(*(axes[a] for a in names))]
    if not names or not grid:
        raise UsageError("sweep grid is empty")
    out_name = data.get("csv", "sweep.csv")
    return base, grid, out_name


def cmd_sweep(config: str, out_dir: Path, workers: int) -> int:
    try:
        base, grid, out_name = _load_sweep(config)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    seed = _seed_override()
    if seed is not None:
        base = base.with_seed(seed)
    checks = list(base.checks)
    jobs = [(i, base, cell, checks) for i, cell in enumerate(grid)]
    if workers <= 1 or len(jobs) == 1:
        rows = [_sweep_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    header = ["cell", *SWEEP_AXES, *TrajectoryRecord.COLUMNS, *checks, "error"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / out_name).write_text(buf.getvalue(), encoding="utf-8")
    n_check = len(checks)
    statuses = [s for r in rows for s in r[-1 - n_check : -1]] if n_check else []
    print(f"{len(rows)} cells written to {out_dir / out_name}")
    failed = any(s in ("fail", "error") for s in statuses) or any(r[-1] for r in rows)
    return EXIT_FAIL if failed else EXIT_PASS


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS, help="directory for output files")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="sweep worker processes")

    parser = argparse.ArgumentParser(prog="lohe-lab", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="integrate one configured run")
    p.add_argument("config", help="config JSON path or bundled config name")
    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("suite", help=f"one of {', '.join(list(SUITES) + ['all'])}")
    p = sub.add_parser("sweep", parents=[common], help="run a parameter grid")
    p.add_argument("config", help="sweep config JSON path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out_dir = getattr(args, "out_dir", Path("."))
    workers = getattr(args, "workers", None) or os.cpu_count() or 1
    if workers < 1:
        print("lohe-lab: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run":
            return cmd_run(args.config, out_dir)
        if args.command == "verify":
            return cmd_verify(args.suite, out_dir)
        return cmd_sweep(args.config, out_dir, workers)
    except (UsageError, ConfigError) as exc:
        print(f"lohe-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
