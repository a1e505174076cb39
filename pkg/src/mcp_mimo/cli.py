"""Command-line entry point: ``mcp mi|table2|power|precode|sim|check``.

Every subcommand reads a YAML config, writes CSV/JSON into ``--out`` (or the
config's ``output.dir``, or the current directory) and exits with

* 0 on success,
* 1 on a configuration error,
* 2 when a solver stops without converging (its best iterate is still written),
* 3 when a property check fails.

CSV files start with ``#`` comment lines carrying the config hash and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from .checks import run_checks
from .config import ExperimentConfig, load_config, parse_config
from .constellation import GaussianInputs
from .coopsim import run_downlink_session, run_uplink_session
from .errors import ConfigError, IntegratorBudgetTooSmall, NoConvergence, NoImprovement
from .experiments import mi_sweep, table2_row
from .infotheory import evaluate
from .integrate import Integrator
from .power import algorithm1_solve, solve_power_gaussian
from .precoder import (
    PrecoderMatrix,
    algorithm2_solve,
    d_min,
    decompose,
    highsnr_bound,
    lowsnr_optimal_precoder,
    lowsnr_slope,
    optimize_precoder_highsnr,
)

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("mcp")


class _Output:
    def __init__(self, cfg: ExperimentConfig, directory: str, command: str):
        self.cfg = cfg
        self.dir = directory
        self.command = command
        os.makedirs(directory, exist_ok=True)

    def header(self) -> list:
        return [
            f"# mcp {self.command} scenario={self.cfg.scenario}",
            f"# config_sha256={self.cfg.sha256} seed={self.cfg.seed}",
        ]

    def csv(self, name: str, rows: list, columns: list = None) -> str:
        columns = columns or (list(rows[0]) if rows else [])
        buf = io.StringIO()
        buf.write("\n".join(self.header()) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
        return self._write(name, buf.getvalue())

    def json(self, name: str, data: dict) -> str:
        meta = {"config_sha256": self.cfg.sha256, "seed": self.cfg.seed, "command": self.command}
        text = json.dumps({"meta": meta, **data}, sort_keys=True, indent=2) + "\n"
        return self._write(name, text)

    def _write(self, name: str, text: str) -> str:
        path = os.path.join(self.dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(path)
        return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _complex_rows(M) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(M)]


def _base_precoder(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.P is not None:
        return cfg.P
    return np.diag(np.sqrt(np.asarray(cfg.caps, dtype=float)))


def cmd_mi(cfg: ExperimentConfig, out: _Output) -> int:
    rows = mi_sweep(cfg.H, _base_precoder(cfg), cfg.inputs(), cfg.snr_db, cfg.integrator)
    out.csv("mi.csv", rows)
    return EXIT_OK


def cmd_table2(cfg: ExperimentConfig, out: _Output) -> int:
    t = cfg.table2
    rows = []
    for n in t["sizes"]:
        for sig in t["signaling"]:
            integ = Integrator(nodes=t["nodes"], samples=t["samples"], seed=cfg.seed or 0)
            r = table2_row(n, sig, t["snr_db"], integ)
            rows.append({
                "setup": r.setup, "signaling": r.signaling,
                "mi_without": r.mi_without, "mi_with": r.mi_with, "loss": r.loss,
                "std_without": r.std_without, "std_with": r.std_with,
            })
    out.csv("table2.csv", rows)
    return EXIT_OK


def cmd_power(cfg: ExperimentConfig, out: _Output) -> int:
    snr_db = cfg.snr_db[-1]
    vc = cfg.channel(snr_db)
    inputs = cfg.inputs()
    code = EXIT_OK
    if isinstance(inputs, GaussianInputs):
        sol = solve_power_gaussian(vc, cfg.caps)
    else:
        try:
            sol = algorithm1_solve(vc, cfg.caps, inputs, cfg.power)
        except NoConvergence as exc:
            sol, code = exc.best, EXIT_NOCONV
    out.json("power.json", {"snr_db": snr_db, "caps": list(cfg.caps), "solution": sol.to_dict()})
    trace = [
        {"iteration": k, **{f"p{i + 1}": float(p) for i, p in enumerate(powers)},
         "mi_bits": mi / math.log(2.0)}
        for k, powers, mi in sol.history
    ]
    if trace:
        out.csv("power_trace.csv", trace)
    return code


def cmd_precode(cfg: ExperimentConfig, out: _Output) -> int:
    snr_db = cfg.snr_db[-1]
    vc = cfg.channel(snr_db)
    inputs = cfg.inputs()
    budget = cfg.precoder.trace_budget
    code = EXIT_OK
    try:
        sol = algorithm2_solve(vc, cfg.P, inputs, cfg.precoder)
    except NoConvergence as exc:
        sol, code = exc.best, EXIT_NOCONV
    _, rep = evaluate(vc, sol.precoder.P, inputs, cfg.integrator)
    dec = decompose(sol.precoder, vc, rep)
    low = lowsnr_optimal_precoder(vc, vc.snr, budget)
    result = {
        "snr_db": snr_db,
        "algorithm2": sol.to_dict(),
        "decomposition": {
            "U": _complex_rows(dec.U), "D": [float(d) for d in dec.D], "R": _complex_rows(dec.R),
            "perm": list(dec.perm), "u_mismatch": dec.u_mismatch, "r_mismatch": dec.r_mismatch,
        },
        "lowsnr": {"precoder": low.to_dict(), "slope": lowsnr_slope(vc, low)},
    }
    if not isinstance(inputs, GaussianInputs):
        try:
            hs, trace = optimize_precoder_highsnr(vc, inputs, cfg.highsnr)
        except NoImprovement as exc:
            hs, trace = exc.best, exc.best.trace
        result["highsnr"] = {
            "precoder": hs.precoder.to_dict(), "d_min": hs.d_min, "bound_nats": hs.bound,
            "restart": hs.restart,
        }
        out.csv("highsnr_trace.csv", [
            {"restart": r, "iteration": k, "d_min": d, "trace": tr} for r, k, d, tr in trace
        ])
        named = {"algorithm2": sol.precoder.P, "highsnr": hs.precoder.P, **cfg.matrices}
        result["d_min"] = {name: d_min(vc, M, inputs) for name, M in named.items()}
        result["bound_nats"] = {
            name: highsnr_bound(vc, M, inputs, vc.snr) for name, M in named.items()
            if result["d_min"][name] > 0
        }
    else:
        named = {"algorithm2": sol.precoder.P, **cfg.matrices}
    out.json("precoder.json", result)
    curves = []
    for snr in cfg.snr_db:
        row = {"snr_db": snr}
        for name, M in named.items():
            mi, _ = evaluate(cfg.channel(snr), M, inputs, cfg.integrator, want_mmse=False)
            row[f"{name}_bits"] = mi.bits
            row[f"{name}_std"] = mi.std_error_bits
        curves.append(row)
    out.csv("precoder_mi.csv", curves)
    return code


def cmd_sim(cfg: ExperimentConfig, out: _Output) -> int:
    vc = cfg.channel(cfg.snr_db[-1])
    inputs = cfg.inputs()
    code = EXIT_OK
    try:
        if cfg.direction == "uplink":
            transcript, sol = run_uplink_session(vc, cfg.caps, inputs, cfg.link, cfg.session)
            result = sol.to_dict() if sol is not None else None
        else:
            transcript, P, W = run_downlink_session(vc, inputs, cfg.link, cfg.session)
            result = None if P is None else {"precoder": P.to_dict(), "weights": _complex_rows(W)}
    except NoConvergence as exc:
        transcript, result, code = None, {"best": exc.best.to_dict()}, EXIT_NOCONV
    if transcript is not None:
        path = os.path.join(out.dir, "transcript.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(transcript.to_json() + "\n")
        print(path)
    out.json("session.json", {
        "direction": cfg.direction,
        "outcome": transcript.outcome if transcript is not None else "no_convergence",
        "result": result,
    })
    return code


def cmd_check(cfg: ExperimentConfig, out: _Output) -> int:
    results = run_checks(cfg.check.get("gradient_factor"), cfg.seed or 0)
    for r in results:
        print(r.line())
    out.json("check.json", {"checks": [
        {"name": r.name, "passed": r.passed, "measured": r.measured, "tolerance": r.tolerance}
        for r in results
    ]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


COMMANDS = {
    "mi": cmd_mi,
    "table2": cmd_table2,
    "power": cmd_power,
    "precode": cmd_precode,
    "sim": cmd_sim,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcp", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="YAML experiment config (optional for 'check')")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None:
            if args.command != "check":
                raise ConfigError("--config is required for this command")
            cfg = parse_config("version: 1\nscenario: default-check\nseed: 0\n", args.seed)
        else:
            cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _Output(cfg, args.out or cfg.output_dir or ".", args.command)
    try:
        return COMMANDS[args.command](cfg, out)
    except IntegratorBudgetTooSmall as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
