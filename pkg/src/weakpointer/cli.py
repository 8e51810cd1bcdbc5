"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 post-selection failure,
3 oracle disagreement, 4 scenario assertion failure, 5 non-finite output.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import network
from .circuit import Circuit, build_circuit
from .errors import (
    CircuitError,
    OracleDisagreementError,
    PostselectionError,
    ScenarioAssertionError,
    WeakPointerError,
)
from .montecarlo import estimate_weak_value, sample_events, seed_from_env
from .oracle import MAX_DEVICES, oracle_simulate
from .pointer import MeterDevice, first_order_prediction, pointer_report
from .scenarios import COLUMNS, ORACLE_TOL, SCENARIOS, run_scenario
from .tsvf import weak_probability_table

EXIT_CONFIG, EXIT_POSTSELECTION, EXIT_ORACLE, EXIT_ASSERTION, EXIT_NONFINITE = 1, 2, 3, 4, 5


class ConfigError(Exception):
    pass


class NonFiniteOutput(Exception):
    pass


@dataclass
class RunConfig:
    circuit: Circuit
    devices: list[MeterDevice] = field(default_factory=list)
    seed: int | None = None
    fmt: str = "csv"
    oracle: bool = False

    def __post_init__(self):
        if self.oracle and len(self.devices) > MAX_DEVICES:
            raise ConfigError(f"--oracle supports at most {MAX_DEVICES} devices")


def _read_json(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_circuit_arg(arg: str) -> tuple[Circuit, list[dict]]:
    """``canonical`` or a JSON file holding a circuit (optionally with devices)."""
    if arg == "canonical":
        return network.canonical_network(), []
    doc = _read_json(arg)
    if not isinstance(doc, dict):
        raise ConfigError(f"{arg}: top level must be an object")
    desc = doc.get("circuit", doc)
    try:
        return build_circuit(desc), list(doc.get("devices", []))
    except CircuitError as exc:
        raise ConfigError(f"{arg}: {exc}") from None


def parse_device(text: str) -> dict:
    """``[ID=]PATH@STAGE:DELTA[:SIGMA]``, e.g. ``B@ABC:0.1``."""
    ident = None
    if "=" in text:
        ident, text = text.split("=", 1)
    try:
        where, *nums = text.split(":")
        path, stage = where.split("@")
        delta = float(nums[0])
        sigma = float(nums[1]) if len(nums) > 1 else 1.0
    except (ValueError, IndexError):
        raise ConfigError(f"bad device {text!r}; expected [ID=]PATH@STAGE:DELTA[:SIGMA]") from None
    return {"id": ident or path, "path": path, "stage": stage, "delta": delta, "sigma": sigma}


def _devices(args, circuit: Circuit, from_file: list[dict]) -> list[MeterDevice]:
    raw = list(from_file)
    if getattr(args, "devices", None):
        doc = _read_json(args.devices)
        raw += doc["devices"] if isinstance(doc, dict) else doc
    raw += [parse_device(t) for t in getattr(args, "device", None) or []]
    out = []
    for i, d in enumerate(raw):
        try:
            dev = MeterDevice.from_dict(d)
            stage = circuit.stage_index(dev.stage)
            circuit.check_path(dev.path, stage)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"devices[{i}]: {exc}") from None
        out.append(MeterDevice(dev.id, dev.path, stage, dev.delta, dev.sigma))
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise NonFiniteOutput(f"non-finite value {x!r} in output")
        return format(float(x), ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise NonFiniteOutput(f"non-finite value {x!r} in output")
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def emit(rows: list[dict], columns, fmt: str, out=None):
    out = out or sys.stdout
    if fmt == "json":
        json.dump([{k: _jsonable(v) for k, v in r.items()} for r in rows], out, indent=2)
        out.write("\n")
        return
    text = [[_fmt(r.get(c)) for c in columns] for r in rows]
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    w.writerows(text)


def _default_terminal(c: Circuit) -> str:
    return network.POSTSELECTED if network.POSTSELECTED in c.terminals else c.terminals[0]


def cmd_weakvalues(args) -> int:
    c, _ = load_circuit_arg(args.circuit)
    terminal = args.to or _default_terminal(c)
    stage = args.stage if args.stage is not None else (network.STAGE_ABC if args.circuit == "canonical" else 0)
    try:
        table = weak_probability_table(c, args.source, terminal, stage)
    except CircuitError as exc:
        raise ConfigError(str(exc)) from None
    rows = [{"path": p, "re": v.real, "im": v.imag} for p, v in table.values.items()]
    rows.append({"path": "sum", "re": table.sum.real, "im": table.sum.imag})
    emit(rows, ("path", "re", "im"), args.format)
    return 0


def cmd_simulate(args) -> int:
    c, file_devs = load_circuit_arg(args.circuit)
    cfg = RunConfig(c, _devices(args, c, file_devs), fmt=args.format, oracle=args.oracle)
    terminals = [args.terminal] if args.terminal else list(c.terminals)
    grid = oracle_simulate(c, args.source, cfg.devices) if cfg.oracle else None
    rows, worst = [], 0.0
    for t in terminals:
        if t not in c.terminals:
            raise ConfigError(f"unknown terminal {t!r}; terminals are {list(c.terminals)}")
        try:
            rep = pointer_report(c, args.source, t, cfg.devices)
        except PostselectionError:
            if args.terminal:
                raise
            continue
        meters = cfg.devices or [None]
        for d in meters:
            row = {"terminal": t, "postselection_probability": rep.postselection_probability}
            if d is not None:
                try:
                    first = first_order_prediction(c, args.source, t, cfg.devices, d.id)
                except PostselectionError:
                    first = None
                row.update(meter=d.id, delta=d.delta, sigma=d.sigma, mean=rep.means[d.id],
                           weak_estimate=rep.weak_estimates[d.id], first_order=first)
            if grid is not None:
                g = grid.terminals[t]
                row["oracle_probability"] = g.probability
                disc = abs(g.probability - rep.postselection_probability)
                if d is not None:
                    row["oracle_mean"] = g.means[d.id]
                    disc = max(disc, abs(g.means[d.id] - rep.means[d.id]))
                row["discrepancy"] = disc
                worst = max(worst, disc)
            rows.append(row)
    cols = ["terminal", "postselection_probability", "meter", "delta", "sigma", "mean",
            "weak_estimate", "first_order"]
    if grid is not None:
        cols += ["oracle_probability", "oracle_mean", "discrepancy"]
    emit(rows, cols, cfg.fmt)
    if worst > ORACLE_TOL:
        print(f"oracle disagreement {worst:.3g} exceeds {ORACLE_TOL}", file=sys.stderr)
        return EXIT_ORACLE
    return 0


def _floats(text: str | None):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


def cmd_scan(args) -> int:
    if args.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {args.scenario!r}; valid: {', '.join(SCENARIOS)}")
    params = {"sigma": args.sigma}
    for key, val in (("delta", args.delta), ("delta_b", args.delta_b),
                     ("delta_f", args.delta_f), ("k", args.k)):
        vals = _floats(val)
        if vals is not None:
            params[key] = vals
    seed = seed_from_env(args.seed)
    try:
        rows = run_scenario(args.scenario, params, oracle=args.oracle, seed=seed)
    except ScenarioAssertionError as exc:
        print(f"scenario assertion failed: {exc}", file=sys.stderr)
        if exc.row is not None:
            emit([exc.row.as_dict()], COLUMNS, "csv", sys.stderr)
        return EXIT_ASSERTION
    emit([r.as_dict() for r in rows], COLUMNS, args.format)
    return 0


def cmd_sample(args) -> int:
    c, file_devs = load_circuit_arg(args.circuit)
    seed = seed_from_env(args.seed)
    if seed is None:
        raise ConfigError("sample needs --seed or WEAKPOINTER_SEED")
    cfg = RunConfig(c, _devices(args, c, file_devs), seed=seed, fmt=args.format)
    batch = sample_events(c, args.source, cfg.devices, args.n, seed)
    counts = batch.counts()
    rows = []
    for t in c.terminals:
        n_t = counts.get(t, 0)
        base = {"terminal": t, "count": n_t, "frequency": n_t / args.n, "seed": seed}
        if not cfg.devices or n_t < 2:
            rows.append(base)
            continue
        for d in cfg.devices:
            x = batch.at(t, d.id)
            row = dict(base, meter=d.id, mean=float(np.mean(x)))
            if d.delta != 0:
                est = estimate_weak_value(x, d.id, d.delta)
                row.update(estimate=est.estimate, standard_error=est.standard_error)
            rows.append(row)
    emit(rows, ("terminal", "count", "frequency", "meter", "mean", "estimate", "standard_error", "seed"),
         cfg.fmt)
    return 0


def build_parser() -> argparse.ArgumentParser:
    scen = "\n".join(f"  {n:<24} {s.summary}\n  {'':<24} params: {s.parameters}" for n, s in SCENARIOS.items())
    p = argparse.ArgumentParser(
        prog="weakpointer",
        description="Weak measurements in pre- and post-selected interferometer networks.",
        epilog=f"scenarios:\n{scen}\n\nseed fallback: WEAKPOINTER_SEED environment variable",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--circuit", default="canonical", help="'canonical' or a circuit JSON file")
        sp.add_argument("--from", dest="source", default=None, help="source port (default: circuit source)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    def device_args(sp):
        sp.add_argument("--device", action="append", metavar="[ID=]PATH@STAGE:DELTA[:SIGMA]",
                        help="meter device; repeatable")
        sp.add_argument("--devices", metavar="JSON", help="file with a devices list")

    wv = sub.add_parser("weakvalues", help="weak-probability table at one stage")
    common(wv)
    wv.add_argument("--to", default=None, help="post-selected terminal (default D)")
    wv.add_argument("--stage", default=None, help="stage name or index")
    wv.set_defaults(func=cmd_weakvalues)

    sm = sub.add_parser("simulate", help="exact pointer statistics")
    common(sm)
    device_args(sm)
    sm.add_argument("--terminal", default=None)
    sm.add_argument("--oracle", action="store_true", help="cross-check on the grid oracle")
    sm.set_defaults(func=cmd_simulate)

    sc = sub.add_parser("scan", help="run a named scenario",
                        epilog=f"scenarios:\n{scen}", formatter_class=argparse.RawDescriptionHelpFormatter)
    sc.add_argument("--scenario", required=True)
    sc.add_argument("--delta", default=None)
    sc.add_argument("--delta-b", dest="delta_b", default=None)
    sc.add_argument("--delta-f", dest="delta_f", default=None)
    sc.add_argument("--k", default=None)
    sc.add_argument("--sigma", type=float, default=1.0)
    sc.add_argument("--seed", type=int, default=None)
    sc.add_argument("--oracle", action="store_true")
    sc.add_argument("--format", choices=("csv", "json"), default="csv")
    sc.set_defaults(func=cmd_scan)

    sa = sub.add_parser("sample", help="Monte Carlo detection events")
    common(sa)
    device_args(sa)
    sa.add_argument("--n", type=int, default=100000)
    sa.add_argument("--seed", type=int, default=None)
    sa.set_defaults(func=cmd_sample)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PostselectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_POSTSELECTION
    except OracleDisagreementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except NonFiniteOutput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (CircuitError, WeakPointerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
