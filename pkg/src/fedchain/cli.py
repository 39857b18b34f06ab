"""Command-line entry point: ``fedchain run|bench-ckks|gas-report|auction-demo``.

Output files go to the config's ``output_dir`` (or ``$FEDCHAIN_OUT``). All
results are computed in memory first and written only once the command has
succeeded, so a failing command leaves no partial files behind.
"""

from __future__ import annotations

import argparse
import csv
import functools
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import ckks
from ._accel import backend_name
from .config import ConfigError, load_config
from .flcore import ClientUpdate, GlobalStep, ModelWeights, decrypt_model, encrypt_update, encrypted_fedavg, fedavg
from .ledger import Ledger, gas_cost_report, gas_report_csv, parse_snapshot
from .scenario import ScriptError, demo_script, replay
from .simnet import (
    TRACE_HEADER, finish_experiment, parse_summary, prepare_experiment, run_auction_phase, run_round,
    summary_text, trace_csv,
)

log = logging.getLogger("fedchain")

TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.txt"
SNAPSHOT_FILE = "ledger_snapshot.txt"
GAS_FILE = "gas_report.csv"


def _write_all(out_dir: Path, files: dict[str, str]) -> None:
    """Write each file through a temporary sibling and rename it into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out_dir / name)


def _check_run_outputs(out_dir: Path) -> None:
    with open(out_dir / TRACE_FILE, newline="") as fh:
        header = next(csv.reader(fh))
    if tuple(header) != TRACE_HEADER:
        raise RuntimeError("trace header mismatch")
    parse_summary((out_dir / SUMMARY_FILE).read_text())
    parse_snapshot((out_dir / SNAPSHOT_FILE).read_text())


def _exit_code(fn):
    """Turn any exception into a one-line diagnostic and a nonzero code:
    2 for bad configs or scripts, 1 for everything else."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs) -> int:
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ScriptError) as exc:
            print(f"fedchain: config error: {exc}", file=sys.stderr)
            return 2
        except Exception as exc:  # noqa: BLE001
            print(f"fedchain: error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
    return wrapper


@_exit_code
def cmd_run(config_path) -> int:
    cfg = load_config(config_path)
    plan = cfg.to_plan()
    state = prepare_experiment(plan)
    run_auction_phase(state)
    for r in range(plan.rounds):
        trace = run_round(state)
        log.info("round %d accuracy %.4f dropouts %d", r, trace.accuracy, len(trace.dropouts))
        if state.finished:
            break
    summary = finish_experiment(state)
    out = cfg.out_dir()
    _write_all(out, {
        TRACE_FILE: trace_csv(state.traces, cfg.record_wall_time),
        SUMMARY_FILE: summary_text(summary, cfg.record_wall_time),
        SNAPSHOT_FILE: state.ledger.snapshot_text(),
    })
    _check_run_outputs(out)
    print(f"final_accuracy = {summary['final_accuracy']:.4f}")
    print(f"wrote {out / TRACE_FILE}, {out / SUMMARY_FILE}, {out / SNAPSHOT_FILE}")
    return 0


def _timed(fn, repeats: int):
    best, result = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_ckks(preset: str, repeats: int = 3, clients: int = 10, seed: int = 0):
    """Per-op timings plus the encrypted/plaintext aggregation time ratio for
    a round of ``clients`` updates to a 999-input, 10-class linear model
    (exactly 10,000 parameters)."""
    params = ckks.preset(preset)
    rng = np.random.default_rng(seed)
    keys = ckks.keygen(params, seed)
    v = rng.uniform(-1, 1, params.slots)
    level = params.max_level
    rows = []
    t, pt = _timed(lambda: ckks.encode(v, params, level), repeats)
    rows.append(("encode", t))
    t, ct = _timed(lambda: ckks.encrypt(pt, keys.public_key, seed), repeats)
    rows.append(("encrypt", t))
    rows.append(("add", _timed(lambda: ckks.add(ct, ct), repeats)[0]))
    weight = ckks.encode(np.full(params.slots, 0.5), params, level)
    t, prod = _timed(lambda: ckks.mul_plain(ct, weight), repeats)
    rows.append(("mul_plain", t))
    rows.append(("rescale", _timed(lambda: ckks.rescale(prod), repeats)[0]))
    rows.append(("decrypt", _timed(lambda: ckks.decrypt(ct, keys.secret_key), repeats)[0]))

    shape = (999, 10)
    param_count = 999 * 10 + 10
    w = ModelWeights(rng.normal(size=param_count), shape)
    updates = [ClientUpdate(rng.normal(scale=0.01, size=param_count), int(rng.integers(50, 500)))
               for _ in range(clients)]
    enc = [encrypt_update(u, keys.public_key, seed + i) for i, u in enumerate(updates)]
    step = GlobalStep()
    t_plain, _ = _timed(lambda: fedavg(w, updates, step), repeats)
    t_enc, agg = _timed(lambda: encrypted_fedavg(w, enc, step, keys.public_key), repeats)
    check = decrypt_model(agg, keys.secret_key, param_count, w.shape)
    ref = fedavg(w, updates, step)
    err = float(np.max(np.abs(check.values - ref.values)) / np.max(np.abs(ref.values)))
    return rows, t_enc / t_plain, err


@_exit_code
def cmd_bench_ckks(preset: str, repeats: int = 3) -> int:
    if preset not in ckks.PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; known: {', '.join(ckks.PRESETS)}")
    rows, ratio, err = bench_ckks(preset, repeats)
    params = ckks.preset(preset)
    print(f"# preset={preset} ring_dim={params.ring_dim} backend={backend_name()} repeats={repeats}")
    print("op,seconds")
    for name, t in rows:
        print(f"{name},{t:.6f}")
    print(f"aggregation_ratio_encrypted_vs_plain,{ratio:.3f}")
    print(f"# aggregation max relative error {err:.3e}")
    return 0


@_exit_code
def cmd_gas_report(config_path) -> int:
    cfg = load_config(config_path)
    report = gas_cost_report(Ledger().gas_table, {"min": cfg.gas_price_min, "avg": cfg.gas_price_avg})
    text = gas_report_csv(report)
    _write_all(cfg.out_dir(), {GAS_FILE: text})
    sys.stdout.write(text)
    return 0


@_exit_code
def cmd_auction_demo(config_path) -> int:
    cfg = load_config(config_path)
    script = cfg.resolve(cfg.scenario).read_text() if cfg.scenario else demo_script(cfg.seed)
    result = replay(script, gas_price=cfg.gas_price_avg)
    result.ledger.seal_block()
    outcome = "\n".join(result.summary_lines()) + "\n"
    _write_all(cfg.out_dir(), {
        "scenario.txt": script,
        "auction_outcomes.txt": outcome,
        SNAPSHOT_FILE: result.ledger.snapshot_text(),
    })
    sys.stdout.write(outcome)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedchain", description="Auction-selected, optionally encrypted FedAvg simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-round progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("config")
    bench = sub.add_parser("bench-ckks", help="time CKKS ops and encrypted aggregation")
    bench.add_argument("preset", choices=sorted(ckks.PRESETS))
    bench.add_argument("--repeats", type=int, default=3)
    gas = sub.add_parser("gas-report", help="per-op gas cost table at min/avg prices")
    gas.add_argument("config")
    demo = sub.add_parser("auction-demo", help="replay a contracts-only auction scenario")
    demo.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "bench-ckks":
        return cmd_bench_ckks(args.preset, args.repeats)
    if args.command == "gas-report":
        return cmd_gas_report(args.config)
    return cmd_auction_demo(args.config)


if __name__ == "__main__":
    sys.exit(main())
