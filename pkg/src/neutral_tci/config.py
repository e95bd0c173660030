"""Experiment configuration files (TOML, ``schema = 1``)."""

from __future__ import annotations

import dataclasses
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .pathspace import ConfigError, PathMetric, TimeGrid

SCHEMA_VERSION = 1
CONSTANT_KEYS = ("kappa", "lambda1", "lambda2", "lambda3", "delta", "sigma_bound")


class ConfigFieldError(ConfigError):
    """Invalid field, reported with its dotted location and source line."""

    def __init__(self, where: str, message: str, line: int | None = None, source: str = "<config>"):
        loc = f"{source}:{line}" if line else source
        super().__init__(f"{loc}: [{where}] {message}")
        self.where = where
        self.line = line


@dataclass(frozen=True)
class ModelBlock:
    name: str
    params: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    xi: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.0})


@dataclass(frozen=True)
class PerturbationBlock:
    kind: str = "zero"
    value: tuple = (0.0,)
    gain: float = 0.0
    energy_cap: float | None = None


@dataclass(frozen=True)
class RunBlock:
    n_paths: int = 256
    seed: int = 0
    workers: int | None = None
    metrics: tuple = (PathMetric.L2_IN_TIME,)
    t_independent: bool = False
    epsilon: float | None = None
    empirical_w2: str | None = None
    audit_pairs: int = 300
    audit_box: float = 1.0


@dataclass(frozen=True)
class OutputBlock:
    dir: str = "out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelBlock
    grid: TimeGrid
    perturbation: PerturbationBlock
    run: RunBlock
    output: OutputBlock
    schema: int = SCHEMA_VERSION
    source: str = "<config>"
    text: str = field(default="", repr=False, compare=False)

    def with_overrides(self, seed: int | None = None, workers: int | None = None,
                       out: str | None = None) -> "ExperimentConfig":
        run, output = self.run, self.output
        if seed is not None:
            run = dataclasses.replace(run, seed=int(seed))
        if workers is not None:
            run = dataclasses.replace(run, workers=int(workers))
        if out is not None:
            output = dataclasses.replace(output, dir=str(out))
        return dataclasses.replace(self, run=run, output=output)

    @property
    def is_spde(self) -> bool:
        return self.model.name == "heat-example"


def _line_of(text: str, section: str, key: str | None) -> int | None:
    """Best-effort line number of `key` inside `[section]` (or the header)."""
    current = ""
    header_line = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            current = m.group(1)
            if current == section:
                header_line = no
                if key is None:
                    return no
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*=", line):
            return no
    return header_line


class _Reader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, section: str, key: str | None, message: str):
        where = f"{section}.{key}" if key else section
        raise ConfigFieldError(where, message, _line_of(self.text, section, key), self.source)

    def get(self, table: dict, section: str, key: str, kind, default=..., check=None):
        if key not in table:
            if default is ...:
                self.fail(section, key, "required field is missing")
            return default
        val = table[key]
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if kind is not None and not isinstance(val, kind) or isinstance(val, bool) and kind in (int, float):
            self.fail(section, key, f"expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
        if check is not None:
            msg = check(val)
            if msg:
                self.fail(section, key, msg)
        return val

    def unknown(self, table: dict, section: str, allowed):
        for k in table:
            if k not in allowed:
                self.fail(section, k, f"unknown field (allowed: {', '.join(sorted(allowed))})")


def _positive(v):
    return None if v > 0 and math.isfinite(v) else "must be positive and finite"


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: TOML syntax error: {exc}") from None
    rd = _Reader(text, source)
    rd.unknown(raw, "", ("schema", "model", "grid", "perturbation", "run", "output"))
    schema = raw.get("schema")
    if schema is None:
        raise ConfigFieldError("schema", "required top-level field 'schema = 1' is missing", None, source)
    if schema != SCHEMA_VERSION:
        raise ConfigFieldError("schema", f"unsupported schema {schema!r} (expected {SCHEMA_VERSION})",
                               _line_of(text, "", "schema"), source)

    mt = raw.get("model")
    if not isinstance(mt, dict):
        rd.fail("model", None, "section is missing")
    rd.unknown(mt, "model", ("name", "params", "constants", "xi"))
    name = rd.get(mt, "model", "name", str)
    params = dict(mt.get("params", {}))
    consts = dict(mt.get("constants", {}))
    for k, v in consts.items():
        if k not in CONSTANT_KEYS:
            rd.fail("model.constants", k, f"unknown constant (allowed: {', '.join(CONSTANT_KEYS)})")
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            rd.fail("model.constants", k, "expected a number")
    xi = dict(mt.get("xi", {"kind": "constant", "value": 0.0}))
    if xi.get("kind", "constant") not in ("constant", "mode"):
        rd.fail("model.xi", "kind", "must be 'constant' or 'mode'")
    model = ModelBlock(name, params, {k: float(v) for k, v in consts.items()}, xi)

    gt = raw.get("grid")
    if not isinstance(gt, dict):
        rd.fail("grid", None, "section is missing")
    rd.unknown(gt, "grid", ("tau", "horizon", "dt"))
    tau = rd.get(gt, "grid", "tau", float, check=_positive)
    horizon = rd.get(gt, "grid", "horizon", float, check=_positive)
    dt = rd.get(gt, "grid", "dt", float, check=_positive)
    try:
        grid = TimeGrid(tau, horizon, dt)
    except ValueError as exc:
        rd.fail("grid", "dt", str(exc))

    pt = raw.get("perturbation", {})
    rd.unknown(pt, "perturbation", ("kind", "value", "gain", "energy_cap"))
    kind = rd.get(pt, "perturbation", "kind", str, "zero",
                  check=lambda v: None if v in ("zero", "constant", "feedback") else
                  "must be one of zero, constant, feedback")
    value = pt.get("value", 0.0)
    value = tuple(float(v) for v in (value if isinstance(value, list) else [value]))
    gain = rd.get(pt, "perturbation", "gain", float, 0.0)
    cap = rd.get(pt, "perturbation", "energy_cap", float, None, check=_positive)
    pert = PerturbationBlock(kind, value, gain, cap)

    rt = raw.get("run", {})
    rd.unknown(rt, "run", ("n_paths", "seed", "workers", "metrics", "t_independent", "epsilon",
                           "empirical_w2", "audit_pairs", "audit_box"))
    metrics = rt.get("metrics", ["l2"])
    if not isinstance(metrics, list) or not metrics:
        rd.fail("run", "metrics", "must be a nonempty list")
    try:
        metrics = tuple(PathMetric.parse(m) for m in metrics)
    except ValueError as exc:
        rd.fail("run", "metrics", str(exc))
    if PathMetric.SUM_SUP_SQUARES in metrics and not grid.is_integer_horizon():
        rd.fail("run", "metrics", "inf1 needs an integer horizon")
    w2 = rt.get("empirical_w2", False)
    if w2 is True:
        w2 = "coupled"
    if w2 not in (False, "coupled", "independent"):
        rd.fail("run", "empirical_w2", "must be false, 'coupled' or 'independent'")
    seed = rd.get(rt, "run", "seed", int, 0, check=lambda v: None if 0 <= v < 2**64 else "must be a u64")
    run = RunBlock(
        n_paths=rd.get(rt, "run", "n_paths", int, 256, check=lambda v: None if v >= 1 else "must be >= 1"),
        seed=seed,
        workers=rd.get(rt, "run", "workers", int, None, check=lambda v: None if v >= 1 else "must be >= 1"),
        metrics=metrics,
        t_independent=rd.get(rt, "run", "t_independent", bool, False),
        epsilon=rd.get(rt, "run", "epsilon", float, None,
                       check=lambda v: None if 0 < v < 1 else "must lie in (0, 1)"),
        empirical_w2=w2 or None,
        audit_pairs=rd.get(rt, "run", "audit_pairs", int, 300, check=lambda v: None if v >= 1 else "must be >= 1"),
        audit_box=rd.get(rt, "run", "audit_box", float, 1.0, check=_positive),
    )

    ot = raw.get("output", {})
    rd.unknown(ot, "output", ("dir", "formats"))
    fmts = ot.get("formats", ["csv", "json"])
    if not isinstance(fmts, list) or any(f not in ("csv", "json") for f in fmts):
        rd.fail("output", "formats", "must be a list drawn from csv, json")
    output = OutputBlock(rd.get(ot, "output", "dir", str, "out"), tuple(fmts))
    return ExperimentConfig(model, grid, pert, run, output, schema, source, text)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))


# ---------------------------------------------------------------------------
# materialization

def build_model(cfg: ExperimentConfig):
    """NeutralModel (or SpdeModel for the heat example) described by the config."""
    from . import builtins
    from .galerkin import HeatExampleSpec, build_heat_example

    mb = cfg.model
    if cfg.is_spde:
        p = dict(mb.params)
        K = int(p.pop("K", 16))
        try:
            spec = HeatExampleSpec(**p)
        except TypeError as exc:
            raise ConfigFieldError("model.params", str(exc), _line_of(cfg.text, "model.params", None),
                                   cfg.source) from None
        model = build_heat_example(spec, K)
        if abs(spec.tau - cfg.grid.tau) > 1e-12:
            raise ConfigFieldError("grid.tau", f"must equal the model delay {spec.tau}",
                                   _line_of(cfg.text, "grid", "tau"), cfg.source)
        return model
    model = builtins.build(mb.name, **mb.params)
    if mb.constants:
        model = dataclasses.replace(model, **mb.constants)
    if abs(model.params.get("tau", cfg.grid.tau) - cfg.grid.tau) > 1e-12:
        raise ConfigFieldError("grid.tau", f"must equal the model delay {model.params['tau']}",
                               _line_of(cfg.text, "grid", "tau"), cfg.source)
    return model


def state_dim(model) -> int:
    return model.K if hasattr(model, "K") else model.dim


def noise_dim(model) -> int:
    return model.K if hasattr(model, "K") else model.noise_dim


def build_xi(cfg: ExperimentConfig, model) -> np.ndarray:
    xi = cfg.model.xi
    n = state_dim(model)
    if xi.get("kind", "constant") == "mode":
        v = np.zeros(n)
        v[int(xi.get("n", 1)) - 1] = float(xi.get("value", 1.0))
        return v
    val = np.atleast_1d(np.asarray(xi.get("value", 0.0), float))
    if val.size not in (1, n):
        raise ConfigFieldError("model.xi.value", f"needs 1 or {n} entries", None, cfg.source)
    return np.broadcast_to(val, (n,)).copy()


def build_perturbation(cfg: ExperimentConfig, model):
    from .simulate import constant_perturbation, feedback_perturbation, zero_perturbation

    pb = cfg.perturbation
    m = noise_dim(model)
    if pb.kind == "zero":
        return zero_perturbation(m)
    if pb.kind == "constant":
        v = np.asarray(pb.value, float)
        if v.size not in (1, m):
            raise ConfigFieldError("perturbation.value", f"needs 1 or {m} entries", None, cfg.source)
        return constant_perturbation(np.broadcast_to(v, (m,)).copy())
    n = state_dim(model)
    return feedback_perturbation(pb.gain * np.eye(m, n), pb.energy_cap)
