"""Experiment configuration files.

A config is a single YAML document with ``version: 1``.  Every section is
optional except where a subcommand needs it; see the README for the full
schema.  Validation errors name the offending field and its line.

Channel entries may be numbers, ``[re, im]`` pairs or strings such as
``"1+2j"``.  Instead of an explicit matrix, ``channel.preset`` selects
``identity`` or ``ones`` of size ``channel.n``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .channel import VirtualChannel
from .constellation import Inputs, from_name, joint_inputs
from .coopsim import BackhaulLink, SessionParams
from .errors import ConfigError
from .integrate import Integrator
from .power import PowerSolveParams
from .precoder import HighSnrParams, PrecoderSolveParams

__all__ = ["ExperimentConfig", "load_config", "parse_config", "parse_complex_matrix"]

SCHEMA_VERSION = 1
_TOP_KEYS = {
    "version", "scenario", "seed", "channel", "constellations", "normalize_energy",
    "snr_db", "integrator", "power", "precoder", "highsnr", "table2", "link",
    "session", "output", "check",
}


def _line_index(node, path=(), out=None) -> dict:
    """Map key paths to 1-based source lines using the composed node tree."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_index(v, path + (k.value,), out)
            out[path + (k.value,)] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Reader:
    """Typed access into the parsed mapping with line-aware errors."""

    def __init__(self, data: dict, lines: dict):
        self.data = data
        self.lines = lines

    def fail(self, path, message):
        path = tuple(path)
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        raise ConfigError(message, ".".join(str(p) for p in path), line)

    def get(self, path, default=None):
        cur = self.data
        for p in path:
            if isinstance(cur, dict) and p in cur:
                cur = cur[p]
            elif isinstance(cur, list) and isinstance(p, int) and 0 <= p < len(cur):
                cur = cur[p]
            else:
                return default
        return cur

    def section(self, name, allowed) -> dict:
        sec = self.get((name,), {})
        if sec is None:
            return {}
        if not isinstance(sec, dict):
            self.fail((name,), "expected a mapping")
        for k in sec:
            if k not in allowed:
                self.fail((name, k), f"unknown key; allowed: {', '.join(sorted(allowed))}")
        return sec

    def number(self, path, default=None, positive=False, integer=False, minimum=None):
        v = self.get(path, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {v!r}")
        if integer and int(v) != v:
            self.fail(path, f"expected an integer, got {v!r}")
        if positive and v <= 0:
            self.fail(path, "must be positive")
        if minimum is not None and v < minimum:
            self.fail(path, f"must be at least {minimum}")
        return int(v) if integer else float(v)


def _parse_complex(v) -> complex:
    if isinstance(v, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        return complex(v.replace(" ", "").replace("i", "j"))
    raise ValueError(f"cannot read {v!r} as a complex number")


def parse_complex_matrix(rows) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ValueError("expected a nonempty list of rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("rows differ in length")
    return np.array([[_parse_complex(v) for v in r] for r in rows], dtype=complex)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    scenario: str
    seed: Optional[int]
    H: np.ndarray
    constellations: tuple
    normalize_energy: bool
    snr_db: tuple
    integrator: Integrator
    caps: tuple
    power: PowerSolveParams
    precoder: PrecoderSolveParams
    highsnr: HighSnrParams
    matrices: dict
    P: Optional[np.ndarray]
    table2: dict
    link: BackhaulLink
    session: SessionParams
    direction: str
    output_dir: Optional[str]
    check: dict
    sha256: str
    raw: dict = field(repr=False, default=None)

    def channel(self, snr_db: float) -> VirtualChannel:
        return VirtualChannel.from_db(self.H, snr_db)

    def inputs(self) -> Inputs:
        return joint_inputs(list(self.constellations))

    @property
    def users(self) -> int:
        return self.H.shape[1]


def _snr_grid(r: _Reader):
    v = r.get(("snr_db",), [10.0])
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        grid = [float(v)]
    elif isinstance(v, dict):
        for k in v:
            if k not in ("start", "stop", "num"):
                r.fail(("snr_db", k), "unknown key; allowed: num, start, stop")
        start = r.number(("snr_db", "start"))
        stop = r.number(("snr_db", "stop"))
        num = r.number(("snr_db", "num"), integer=True, minimum=1)
        if start is None or stop is None or num is None:
            r.fail(("snr_db",), "linspace needs start, stop and num")
        grid = [float(x) for x in np.linspace(start, stop, num)]
    elif isinstance(v, list):
        grid = []
        for i, x in enumerate(v):
            grid.append(r.number(("snr_db", i)))
    else:
        r.fail(("snr_db",), "expected a number, a list or {start, stop, num}")
    if not grid:
        r.fail(("snr_db",), "snr grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        r.fail(("snr_db",), "snr grid must be strictly increasing")
    return tuple(grid)


def _channel(r: _Reader) -> np.ndarray:
    sec = r.section("channel", {"H", "preset", "n"})
    if "H" in sec and "preset" in sec:
        r.fail(("channel",), "give either H or preset, not both")
    if "H" in sec:
        try:
            return parse_complex_matrix(sec["H"])
        except ValueError as exc:
            r.fail(("channel", "H"), str(exc))
    preset = sec.get("preset", "identity")
    n = r.number(("channel", "n"), 2, integer=True, minimum=1)
    if preset == "identity":
        return np.eye(n, dtype=complex)
    if preset == "ones":
        return np.ones((n, n), dtype=complex)
    r.fail(("channel", "preset"), f"unknown preset '{preset}'; use identity or ones")


def _constellations(r: _Reader, users: int, normalize: bool) -> tuple:
    v = r.get(("constellations",), "bpsk")
    names = [v] * users if isinstance(v, str) else v
    if not isinstance(names, list):
        r.fail(("constellations",), "expected a name or a list of names")
    if len(names) != users:
        r.fail(("constellations",), f"H has {users} columns but {len(names)} constellations given")
    out = []
    for i, name in enumerate(names):
        try:
            out.append(from_name(str(name), normalize))
        except ValueError as exc:
            r.fail(("constellations",) if isinstance(v, str) else ("constellations", i), str(exc))
    kinds = {c.is_finite for c in out}
    if len(kinds) > 1:
        r.fail(("constellations",), "mixing Gaussian and finite users is not supported")
    return tuple(out)


def _integrator(r: _Reader, seed) -> Integrator:
    sec = r.section("integrator", {"kind", "nodes", "samples", "max_quadrature_dim", "block_size"})
    kind = sec.get("kind", "auto")
    if kind not in ("auto", "quadrature", "montecarlo"):
        r.fail(("integrator", "kind"), f"unknown kind '{kind}'")
    kw = {"kind": kind, "seed": 0 if seed is None else seed}
    for key in ("nodes", "samples", "max_quadrature_dim", "block_size"):
        val = r.number(("integrator", key), integer=True, minimum=1)
        if val is not None:
            kw[key] = val
    try:
        return Integrator(**kw)
    except ValueError as exc:
        r.fail(("integrator",), str(exc))


def _solver_kwargs(r: _Reader, name: str, spec: dict) -> dict:
    sec = r.section(name, set(spec))
    kw = {}
    for key, kind in spec.items():
        if key not in sec:
            continue
        if kind == "str":
            kw[key] = str(sec[key])
        elif kind == "int":
            kw[key] = r.number((name, key), integer=True, minimum=0)
        elif kind == "float":
            kw[key] = r.number((name, key))
    return kw


def parse_config(text: str, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Validate a config document; ``seed_override`` replaces the file's seed."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"not valid YAML: {exc}", None, mark.line + 1 if mark else None) from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", None, 1)
    r = _Reader(data, _line_index(node))
    for k in data:
        if k not in _TOP_KEYS:
            r.fail((k,), "unknown top-level key")
    if data.get("version") != SCHEMA_VERSION:
        r.fail(("version",), f"unsupported or missing version; expected {SCHEMA_VERSION}")

    seed = r.number(("seed",), integer=True, minimum=0)
    if seed_override is not None:
        seed = int(seed_override)
    H = _channel(r)
    normalize = bool(data.get("normalize_energy", False))
    consts = _constellations(r, H.shape[1], normalize)
    grid = _snr_grid(r)
    integ = _integrator(r, seed)
    if integ.kind != "quadrature" and seed is None and consts[0].is_finite:
        r.fail(("seed",), "a seed is required whenever Monte Carlo integration may run")

    pkw = _solver_kwargs(r, "power", {
        "caps": "list", "step": "float", "step_rule": "str", "max_iters": "int",
        "tol": "float", "update": "str", "lam": "float", "init": "str",
    })
    caps = r.get(("power", "caps"), [1.0] * H.shape[1])
    if not isinstance(caps, list) or len(caps) != H.shape[1]:
        r.fail(("power", "caps"), f"need one cap per user ({H.shape[1]})")
    for i, c in enumerate(caps):
        if isinstance(c, bool) or not isinstance(c, (int, float)) or c < 0:
            r.fail(("power", "caps", i), f"caps must be nonnegative numbers, got {c!r}")
    caps = tuple(float(c) for c in caps)
    try:
        power = PowerSolveParams(integrator=integ, **pkw)
    except ValueError as exc:
        r.fail(("power",), str(exc))

    ckw = _solver_kwargs(r, "precoder", {
        "step": "float", "step_rule": "str", "max_iters": "int", "tol": "float",
        "lam": "float", "trace_budget": "float", "update": "str", "P": "matrix",
        "compare": "dict",
    })
    matrices = {}
    for name, rows in (r.get(("precoder", "compare"), {}) or {}).items():
        try:
            matrices[str(name)] = parse_complex_matrix(rows)
        except ValueError as exc:
            r.fail(("precoder", "compare", name), str(exc))
    P = r.get(("precoder", "P"))
    if P is not None:
        try:
            P = parse_complex_matrix(P)
        except ValueError as exc:
            r.fail(("precoder", "P"), str(exc))
        if P.shape[0] != H.shape[1]:
            r.fail(("precoder", "P"), f"P has {P.shape[0]} rows but H has {H.shape[1]} columns")
    try:
        precoder = PrecoderSolveParams(integrator=integ, **ckw)
    except ValueError as exc:
        r.fail(("precoder",), str(exc))

    hkw = _solver_kwargs(r, "highsnr", {
        "snr": "float", "restarts": "int", "step": "float", "max_iters": "int",
        "tol": "float", "beta": "float", "trace_budget": "float", "field": "str",
    })
    hkw.setdefault("trace_budget", precoder.trace_budget)
    try:
        highsnr = HighSnrParams(seed=0 if seed is None else seed, **hkw)
    except ValueError as exc:
        r.fail(("highsnr",), str(exc))

    t2 = r.section("table2", {"snr_db", "sizes", "signaling", "samples", "nodes"})
    table2 = {
        "snr_db": r.number(("table2", "snr_db"), 25.0),
        "sizes": tuple(t2.get("sizes", (2, 3, 4))),
        "signaling": tuple(t2.get("signaling", ("bpsk", "qpsk"))),
        "samples": r.number(("table2", "samples"), 200_000, integer=True, minimum=1),
        "nodes": r.number(("table2", "nodes"), 32, integer=True, minimum=1),
    }
    for i, s in enumerate(table2["signaling"]):
        if s not in ("bpsk", "qpsk"):
            r.fail(("table2", "signaling", i), f"unknown signaling '{s}'")

    r.section("link", {"bandwidth", "threshold", "per_message_cost", "latency"})
    try:
        link = BackhaulLink(
            bandwidth=r.number(("link", "bandwidth"), 1e6),
            threshold=r.number(("link", "threshold"), 1.0),
            per_message_cost=r.number(("link", "per_message_cost"), 1.0),
            latency=r.number(("link", "latency"), 0.0),
        )
    except ValueError as exc:
        r.fail(("link",), str(exc))

    s = r.section("session", {"direction", "block_length", "resources"})
    direction = s.get("direction", "uplink")
    if direction not in ("uplink", "downlink"):
        r.fail(("session", "direction"), f"unknown direction '{direction}'")
    resources = s.get("resources", [1.0, 1.0])
    if not isinstance(resources, list) or len(resources) != 2:
        r.fail(("session", "resources"), "need one resource figure per BS")
    session = SessionParams(
        block_length=r.number(("session", "block_length"), 1, integer=True, minimum=1),
        resources=tuple(float(x) for x in resources),
        seed=0 if seed is None else seed,
        power=power,
        precoder=precoder,
    )

    out = r.section("output", {"dir"})
    check = r.section("check", {"gradient_factor"})
    return ExperimentConfig(
        scenario=str(data.get("scenario", "unnamed")),
        seed=seed,
        H=H,
        constellations=consts,
        normalize_energy=normalize,
        snr_db=grid,
        integrator=integ,
        caps=caps,
        power=power,
        precoder=precoder,
        highsnr=highsnr,
        matrices=matrices,
        P=P,
        table2=table2,
        link=link,
        session=session,
        direction=direction,
        output_dir=out.get("dir"),
        check={"gradient_factor": r.number(("check", "gradient_factor"), None)},
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        raw=data,
    )


def load_config(path, seed_override: Optional[int] = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, seed_override)
