"""Experiment configuration: a flat YAML mapping validated into :class:`ExperimentSpec`.

Keys that are absent take defaults; several defaults depend on ``kind``
(sweep ranges, number of communication paths, realization count). Unknown
keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
import numbers
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

__all__ = ["KINDS", "ExperimentSpec", "parse_config", "load_config", "emit_config"]

KINDS = ("convergence", "ber-vs-power", "diag-elements", "ber-vs-crb", "symbol-sweep", "capacity-sweep")

_KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "convergence": {"power_dbm": [30.0], "gamma_c": [5e-5], "channel_realizations": 20, "mc_blocks": 0},
    "ber-vs-power": {"power_dbm": [20.0, 22.0, 24.0, 26.0, 28.0, 30.0], "gamma_c": [5e-5]},
    "diag-elements": {"power_dbm": [30.0], "gamma_c": [5e-5], "channel_realizations": 1, "mc_blocks": 0},
    "ber-vs-crb": {
        "power_dbm": [28.0, 30.0],
        "gamma_c": [2e-5, 3e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3],
        "mc_blocks": 0,
    },
    "symbol-sweep": {"power_dbm": [20.0, 22.0, 24.0, 26.0, 28.0, 30.0], "gamma_c": [5e-5], "paths": 1,
                     "mc_blocks": 0},
    "capacity-sweep": {"power_dbm": [20.0, 22.0, 24.0, 26.0, 28.0, 30.0], "gamma_c": [5e-5], "paths": 1,
                       "mc_blocks": 0},
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment description. Powers are in dBm, ``gamma_c`` is a CRB in Hz^2."""

    kind: str = "ber-vs-power"
    M: int = 8
    N: int = 8
    delta_f: float = 2e3
    carrier_freq: float = 4e9
    paths: int = 3
    l_max: int = 4
    k_max: float = 2.0
    fractional_doppler: bool = True
    sensing_gain_db: float = 50.0
    sigma_c_dbm: float = 0.0
    sigma_s_dbm: float = 0.0
    power_dbm: tuple[float, ...] = (20.0, 22.0, 24.0, 26.0, 28.0, 30.0)
    gamma_c: tuple[float, ...] = (5e-5,)
    constellation: int = 4
    xi_0: float = 1e-3
    rho_scale: float = 10.0
    max_iters: int | None = None
    baseline_power: str = "identity"
    seed: int = 0
    channel_realizations: int = 20
    mc_blocks: int = 2000
    target_error_events: int | None = 400
    output: str = "results"

    def __post_init__(self):
        _validate(self)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["power_dbm"] = list(self.power_dbm)
        out["gamma_c"] = list(self.gamma_c)
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentSpec)}


def _fail(key, msg, line=None):
    where = f" (line {line})" if line is not None else ""
    raise ConfigError(f"{key}{where}: {msg}")


def _int(key, v, lo=None, line=None):
    if isinstance(v, bool) or not isinstance(v, numbers.Integral):
        _fail(key, f"expected an integer, got {v!r}", line)
    if lo is not None and v < lo:
        _fail(key, f"must be >= {lo}, got {v}", line)
    return int(v)


def _float(key, v, positive=False, line=None):
    if isinstance(v, bool) or not isinstance(v, numbers.Real):
        _fail(key, f"expected a number, got {v!r}", line)
    v = float(v)
    if not math.isfinite(v):
        _fail(key, f"must be finite, got {v}", line)
    if positive and v <= 0:
        _fail(key, f"must be > 0, got {v}", line)
    return v


def _floats(key, v, positive=False, line=None):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, (list, tuple)) or len(v) == 0:
        _fail(key, "expected a non-empty list of numbers", line)
    return tuple(_float(key, x, positive, line) for x in v)


def _validate(spec: ExperimentSpec, lines: dict[str, int] | None = None) -> None:
    ln = (lines or {}).get
    if spec.kind not in KINDS:
        _fail("kind", f"must be one of {', '.join(KINDS)}; got {spec.kind!r}", ln("kind"))
    for key in ("M", "N", "paths", "channel_realizations"):
        _int(key, getattr(spec, key), 1, ln(key))
    for key in ("l_max", "mc_blocks", "seed"):
        _int(key, getattr(spec, key), 0, ln(key))
    if spec.seed >= 2 ** 64:
        _fail("seed", "must fit in an unsigned 64-bit integer", ln("seed"))
    for key in ("delta_f", "carrier_freq", "xi_0", "rho_scale"):
        _float(key, getattr(spec, key), True, ln(key))
    for key in ("k_max", "sensing_gain_db", "sigma_c_dbm", "sigma_s_dbm"):
        _float(key, getattr(spec, key), False, ln(key))
    if spec.k_max < 0:
        _fail("k_max", "must be >= 0", ln("k_max"))
    if spec.l_max >= spec.M * spec.N:
        _fail("l_max", f"must be < M*N = {spec.M * spec.N}", ln("l_max"))
    _floats("power_dbm", spec.power_dbm, False, ln("power_dbm"))
    _floats("gamma_c", spec.gamma_c, True, ln("gamma_c"))
    order = _int("constellation", spec.constellation, 2, ln("constellation"))
    if order & (order - 1):
        _fail("constellation", f"QAM order must be a power of two, got {order}", ln("constellation"))
    if not isinstance(spec.fractional_doppler, bool):
        _fail("fractional_doppler", "expected true or false", ln("fractional_doppler"))
    if spec.baseline_power not in ("identity", "budget"):
        _fail("baseline_power", "must be 'identity' or 'budget'", ln("baseline_power"))
    if spec.max_iters is not None:
        _int("max_iters", spec.max_iters, 1, ln("max_iters"))
    if spec.target_error_events is not None:
        _int("target_error_events", spec.target_error_events, 1, ln("target_error_events"))
    if not isinstance(spec.output, str) or not spec.output:
        _fail("output", "expected a non-empty path string", ln("output"))


def _key_lines(text: str) -> dict[str, int]:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}


def parse_config(text: str, *, kind: str | None = None) -> ExperimentSpec:
    """Parse YAML text into a spec; ``kind`` overrides the file's ``kind``."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"invalid YAML{where}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping of keys to values")
    lines = _key_lines(text)
    unknown = sorted(str(k) for k in raw if k not in _FIELDS)
    if unknown:
        k = unknown[0]
        _fail(k, f"unknown key (allowed: {', '.join(sorted(_FIELDS))})", lines.get(k))
    if kind is not None:
        raw["kind"] = kind
    chosen = raw.get("kind", ExperimentSpec.kind)
    if chosen not in KINDS:
        _fail("kind", f"must be one of {', '.join(KINDS)}; got {chosen!r}", lines.get("kind"))
    values = dict(_KIND_DEFAULTS[chosen])
    values.update(raw)
    for key in ("power_dbm", "gamma_c"):
        values[key] = _floats(key, values[key], key == "gamma_c", lines.get(key))
    for key in ("delta_f", "carrier_freq", "k_max", "sensing_gain_db", "sigma_c_dbm", "sigma_s_dbm",
                "xi_0", "rho_scale"):
        if key in values:
            values[key] = _float(key, values[key], line=lines.get(key))
    spec = ExperimentSpec.__new__(ExperimentSpec)
    base = {f.name: f.default for f in _FIELDS.values()}
    base.update(values)
    for k, v in base.items():
        object.__setattr__(spec, k, v)
    _validate(spec, lines)
    return spec


def load_config(path: str | Path | None, *, kind: str | None = None) -> ExperimentSpec:
    if path is None:
        return parse_config("", kind=kind)
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    return parse_config(text, kind=kind)


def emit_config(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False, default_flow_style=None)
