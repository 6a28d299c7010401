"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import rng
from .config import (
    ExperimentConfig,
    dump_config,
    find_sweep_axes,
    from_dict,
    load_raw,
    resolve,
    set_path,
)
from .errors import (
    ConfigError,
    DflsimError,
    InvalidParams,
    InvalidProportion,
    NotEnoughData,
)
from .oracles import ORACLES
from .simulator import build_topology, initialize, run_experiment
from .topology import format_edge_list, write_rewire_log

log = logging.getLogger("dflsim")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

# errors that a corrected config file would avoid
CONFIG_ERRORS = (ConfigError, InvalidParams, InvalidProportion, NotEnoughData)

NODE_HEADER = "round,node_id,role,accuracy,loss\n"
SUMMARY_HEADER = "round,honest_mean_accuracy\n"
SWEEP_HEADER = "param_value,final_honest_mean_accuracy\n"


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_node_csv(history) -> str:
    out = io.StringIO()
    out.write(NODE_HEADER)
    for rm in history:
        for m in rm.per_node:
            out.write(f"{rm.round},{m.id},{m.role},{m.accuracy:.6f},{m.loss:.6f}\n")
    return out.getvalue()


def format_summary_csv(history) -> str:
    return SUMMARY_HEADER + "".join(f"{rm.round},{rm.honest_mean_accuracy:.6f}\n" for rm in history)


def _override_seed(cfg: ExperimentConfig, seed) -> ExperimentConfig:
    if seed is None:
        return cfg
    try:
        return dataclasses.replace(cfg, master_seed=rng.check_seed(seed))
    except ValueError as exc:
        raise ConfigError(str(exc), key="--seed") from None


def _load(path, seed=None) -> ExperimentConfig:
    return _override_seed(from_dict(load_raw(path)), seed)


def run_to_dir(cfg: ExperimentConfig, out_dir, threads: int = 1):
    """Run one experiment and write its self-describing output directory."""
    cfg = resolve(cfg)
    state = initialize(cfg)
    history = run_experiment(cfg, threads=threads, state=state)
    out_dir = Path(out_dir)
    realized = {"realized": {"adversary": state.plan.to_dict(), "num_edges": state.graph.num_edges}}
    atomic_write(out_dir / "graph.txt", format_edge_list(state.graph))
    if cfg.topology.kind == "small_world":
        buf = io.StringIO()
        write_rewire_log(state.rewire_log, buf)
        atomic_write(out_dir / "rewire.txt", buf.getvalue())
    atomic_write(out_dir / "config.yaml", dump_config(cfg, realized))
    atomic_write(out_dir / "nodes.csv", format_node_csv(history))
    atomic_write(out_dir / "summary.csv", format_summary_csv(history))
    return state, history


def cmd_topology(args) -> int:
    cfg = resolve(_load(args.config, args.seed))
    graph, rewire_log = build_topology(cfg)
    out = Path(args.out)
    atomic_write(out, format_edge_list(graph))
    if cfg.topology.kind == "small_world":
        buf = io.StringIO()
        write_rewire_log(rewire_log, buf)
        atomic_write(out.with_name(out.name + ".rewire"), buf.getvalue())
    print(f"wrote {graph.num_edges} edges to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    _, history = run_to_dir(cfg, args.out, threads=args.threads)
    print(f"final honest mean accuracy {history[-1].honest_mean_accuracy:.6f}")
    return EXIT_OK


def _sort_key(value):
    return (0, value, "") if isinstance(value, (int, float)) and not isinstance(value, bool) else (1, 0, str(value))


def cmd_sweep(args) -> int:
    raw = load_raw(args.config)
    axes = find_sweep_axes(raw)
    if len(axes) != 1:
        names = ", ".join(p for p, _ in axes) or "none"
        raise ConfigError(f"a sweep needs exactly one list-valued key, found {len(axes)} ({names})", key="sweep")
    path, values = axes[0]
    if not values:
        raise ConfigError("sweep list is empty", key=path)
    base = _override_seed(from_dict(set_path(raw, path, values[0])), args.seed)
    # validate every point before running any of them
    points = []
    for idx, value in enumerate(values):
        cfg = from_dict(set_path(raw, path, value))
        cfg = dataclasses.replace(cfg, master_seed=rng.derive_seed(base.master_seed, rng.SWEEP, idx))
        points.append((idx, value, cfg))

    out = Path(args.out)
    rows = []
    for idx, value, cfg in points:
        _, history = run_to_dir(cfg, out / f"point_{idx:03d}", threads=args.threads)
        rows.append((value, history[-1].honest_mean_accuracy))
        log.info("sweep point %d (%s=%s) done", idx, path, value)
    rows.sort(key=lambda r: _sort_key(r[0]))
    text = SWEEP_HEADER + "".join(f"{v},{acc:.6f}\n" for v, acc in rows)
    atomic_write(out / "sweep.csv", text)
    print(f"swept {path} over {len(rows)} values")
    return EXIT_OK


def cmd_oracle(args) -> int:
    names = list(ORACLES) if args.which == "all" else [args.which]
    status = EXIT_OK
    for name in names:
        report = ORACLES[name](seed=args.seed or 0)
        print(f"oracle {name}: {report.summary()}")
        if not report.ok:
            status = EXIT_RUNTIME
            print(json.dumps(report.failures[0]), file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dflsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads per round")

    common(sub.add_parser("topology", help="generate and write a graph"), "edge-list file path")
    common(sub.add_parser("run", help="run one experiment"), "output directory")
    common(sub.add_parser("sweep", help="run one experiment per value of a list-valued key"), "output directory")
    p = sub.add_parser("oracle", help="cross-check kernels against brute-force references")
    p.add_argument("which", choices=[*ORACLES, "all"])
    p.add_argument("--seed", type=int, default=0)
    return parser


COMMANDS = {"topology": cmd_topology, "run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DflsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
