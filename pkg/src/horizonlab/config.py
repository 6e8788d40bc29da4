"""Experiment configuration: YAML parsing, strict validation, stable hashing.

Each subcommand declares a schema; validation reports *every* violation
(unknown keys, missing keys, type and range errors) with dotted key paths
rather than stopping at the first.  A validated config is a plain dict with
all defaults filled, so it round-trips losslessly and hashes stably.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .training import REGIMES


class ConfigError(ValueError):
    """Validation failure; ``violations`` lists every problem found."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class Field:
    type: object  # python type or tuple of types
    required: bool = False
    default: object = None
    check: object = None  # optional predicate(value) -> str | None


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _integer(lo=None, hi=None):
    def check(v):
        if not _is_int(v):
            return "must be an integer"
        if lo is not None and v < lo:
            return f"must be >= {lo}"
        if hi is not None and v > hi:
            return f"must be <= {hi}"
        return None

    return check


def _number(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "must be a number"
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}"
        return None

    return check


def _choice(*options):
    def check(v):
        if v not in options:
            return f"must be one of {sorted(options)}"
        return None

    return check


def _int_list(lo=None, allow_empty=False):
    def check(v):
        if not isinstance(v, list) or (not v and not allow_empty):
            return "must be a nonempty list of integers"
        for x in v:
            if not _is_int(x) or (lo is not None and x < lo):
                return f"entries must be integers{' >= %d' % lo if lo is not None else ''}"
        return None

    return check


def _prob_list():
    def check(v):
        if not isinstance(v, list) or not v:
            return "must be a nonempty list of probabilities"
        for x in v:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not 0.0 < x < 1.0:
                return "entries must lie strictly inside (0, 1)"
        return None

    return check


# The model is either drawn (H, delta, seed) or pinned explicitly (q).
_MODEL_SCHEMA = {
    "H": Field(int, check=_integer(lo=1)),
    "delta": Field(float, check=_number(0.0, 0.5, lo_open=True, hi_open=True)),
    "seed": Field(int, default=0, check=_integer()),
    "q": Field(list, check=_prob_list()),
}

_TRAIN_FIELDS = {
    "regime": Field(str, required=True, check=_choice(*REGIMES)),
    "c": Field(float, required=True, check=_number(0.0, 1.0, lo_open=True, hi_open=True)),
    "N": Field(int, default=256, check=_integer(lo=1)),
    "eta": Field(float, default=0.5, check=_number(0.0, lo_open=True)),
    "max_updates_per_stage": Field(int, default=2000, check=_integer(lo=1)),
    "min_reach": Field(int, default=100, check=_integer(lo=1)),
    "q_oracle": Field(bool, default=False),
    "baseline": Field(str, default="exact", check=_choice("exact", "batch")),
    "freeze_blocks": Field(list, default=[], check=_int_list(lo=0, allow_empty=True)),
    "budget_trajectories": Field(int, default=None, check=_integer(lo=0)),
    "budget_step_tokens": Field(int, default=None, check=_integer(lo=1)),
}

SCHEMAS: dict[str, dict] = {
    "simulate": {
        "model": Field(dict, required=True),
        "horizon": Field(int, default=None, check=_integer(lo=1)),
        "samples": Field(int, default=100_000, check=_integer(lo=1)),
        "seed": Field(int, default=0, check=_integer()),
    },
    "snr": {
        "model": Field(dict, required=True),
        "horizons": Field(list, required=True, check=_int_list(lo=1)),
        "blocks": Field(list, default=None, check=_int_list(lo=1)),
        "batch": Field(list, required=True, check=_int_list(lo=1)),
        "replicates": Field(int, default=1024, check=_integer(lo=2)),
        "modes": Field(list, default=["terminal", "dense"]),
        "seed": Field(int, default=0, check=_integer()),
    },
    "train": {
        "model": Field(dict, required=True),
        "seed": Field(int, default=0, check=_integer()),
        **_TRAIN_FIELDS,
    },
    "compare": {
        "model": Field(dict, required=True),
        "regimes": Field(list, required=True),
        "seeds": Field(list, default=[0], check=_int_list()),
        "seed": Field(int, default=0, check=_integer()),
        **{k: v for k, v in _TRAIN_FIELDS.items() if k != "regime"},
    },
    "scaling": {
        "H_list": Field(list, required=True, check=_int_list(lo=1)),
        "regime": Field(str, required=True, check=_choice("full_horizon", "curriculum")),
        "beta": Field(float, default=0.5, check=_number(0.0, 1.0, lo_open=True, hi_open=True)),
        "delta": Field(float, default=0.3, check=_number(0.0, 0.5, lo_open=True, hi_open=True)),
        "seed": Field(int, default=0, check=_integer()),
    },
    "compose": {
        "bank": Field(dict, required=True),
        "mode": Field(str, default="substitution", check=_choice("substitution", "transformation")),
        "h": Field(int, required=True, check=_integer(lo=1)),
        "count": Field(int, required=True, check=_integer(lo=1)),
        "adapters": Field(
            list,
            default=["identity", "affine", "modwrap"],
        ),
        "strict": Field(bool, default=False),
        "seed": Field(int, default=0, check=_integer()),
    },
    "tradeoff": {
        "model": Field(dict, required=True),
        "bins": Field(list, required=True),
        "target": Field(float, required=True, check=_number(0.0, 1.0, lo_open=True, hi_open=True)),
        "budget_step_tokens": Field(int, required=True, check=_integer(lo=0)),
        "rays": Field(int, default=8, check=_integer(lo=1)),
        "tol": Field(float, default=1.0 / 64.0, check=_number(0.0, 1.0, lo_open=True, hi_open=True)),
        "votes": Field(int, default=1, check=_integer(lo=1)),
        "N": Field(int, default=256, check=_integer(lo=1)),
        "eta": Field(float, default=0.5, check=_number(0.0, lo_open=True)),
        "max_updates_per_stage": Field(int, default=4000, check=_integer(lo=1)),
        "q_oracle": Field(bool, default=True),
        "baseline": Field(str, default="exact", check=_choice("exact", "batch")),
        "seed": Field(int, default=0, check=_integer()),
    },
}


def _validate_model_block(model: object, path: str, violations: list[str]) -> dict:
    if not isinstance(model, dict):
        violations.append(f"{path}: must be a mapping")
        return {}
    out: dict = {}
    unknown = set(model) - set(_MODEL_SCHEMA)
    for key in sorted(unknown):
        violations.append(f"{path}.{key}: unknown key")
    if "q" in model:
        for key in ("H", "delta"):
            if key in model:
                violations.append(f"{path}.{key}: cannot be combined with explicit q")
        err = _prob_list()(model.get("q"))
        if err:
            violations.append(f"{path}.q: {err}")
        else:
            out["q"] = [float(x) for x in model["q"]]
            if len(out["q"]) >= 2 and max(out["q"][1:]) > out["q"][0]:
                violations.append(f"{path}.q: deeper entries cannot exceed q[0]")
        out["seed"] = model.get("seed", 0)
        return out
    for key in ("H", "delta"):
        if key not in model:
            violations.append(f"{path}.{key}: required (or give explicit q)")
    for key, fld in _MODEL_SCHEMA.items():
        if key == "q" or key not in model:
            continue
        err = fld.check(model[key]) if fld.check else None
        if err:
            violations.append(f"{path}.{key}: {err}")
        else:
            out[key] = model[key]
    out.setdefault("seed", 0)
    return out


def validate_config(command: str, raw: object) -> dict:
    """Validate a raw mapping against the command schema; fill defaults."""
    if command not in SCHEMAS:
        raise ConfigError([f"unknown command {command!r}"])
    schema = SCHEMAS[command]
    violations: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a mapping"])
    for key in sorted(set(raw) - set(schema)):
        violations.append(f"{key}: unknown key")
    out: dict = {}
    for key, fld in schema.items():
        if key not in raw:
            if fld.required:
                violations.append(f"{key}: required key missing")
            else:
                out[key] = fld.default
            continue
        value = raw[key]
        if key == "model":
            out[key] = _validate_model_block(value, "model", violations)
            continue
        if fld.check is not None:
            if value is None and not fld.required:
                out[key] = None
                continue
            err = fld.check(value)
            if err:
                violations.append(f"{key}: {err}")
                continue
        elif fld.type is not None and not isinstance(value, fld.type):
            violations.append(f"{key}: expected {getattr(fld.type, '__name__', fld.type)}")
            continue
        out[key] = value

    if command == "compare" and "regimes" in out and isinstance(out["regimes"], list):
        for i, r in enumerate(out["regimes"]):
            if r not in REGIMES:
                violations.append(f"regimes[{i}]: must be one of {sorted(REGIMES)}")
    if command == "compose" and isinstance(out.get("bank"), dict):
        bank = out["bank"]
        if set(bank) - {"path", "builtin"}:
            violations.append("bank: keys must be 'path' or 'builtin'")
        if ("path" in bank) == ("builtin" in bank):
            violations.append("bank: give exactly one of 'path' or 'builtin'")
        if "builtin" in bank and isinstance(bank["builtin"], dict):
            b = bank["builtin"]
            if not _is_int(b.get("size")) or b.get("size", 0) < 1:
                violations.append("bank.builtin.size: must be a positive integer")
            if "seed" in b and not _is_int(b["seed"]):
                violations.append("bank.builtin.seed: must be an integer")
    if command == "compose" and isinstance(out.get("adapters"), list):
        for i, kind in enumerate(out["adapters"]):
            if kind not in ("identity", "affine", "modwrap"):
                violations.append(f"adapters[{i}]: unknown adapter kind {kind!r}")
    if command == "tradeoff" and isinstance(out.get("bins"), list):
        if len(out["bins"]) < 2:
            violations.append("bins: need at least two")
        for i, b in enumerate(out["bins"]):
            if not isinstance(b, dict) or not _is_int(b.get("length")) or b["length"] < 1:
                violations.append(f"bins[{i}]: need a mapping with a positive integer length")
            elif set(b) - {"length", "cost"}:
                violations.append(f"bins[{i}]: keys must be 'length' and optional 'cost'")
            elif "cost" in b and (isinstance(b["cost"], bool) or not isinstance(b["cost"], (int, float)) or b["cost"] <= 0):
                violations.append(f"bins[{i}].cost: must be a positive number")

    if violations:
        raise ConfigError(violations)
    return out


def parse_config(command: str, path: str | Path) -> dict:
    """Load a YAML config file and validate it for the given command."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML parse error: {exc}"]) from exc
    if raw is None:
        raw = {}
    return validate_config(command, raw)


def config_hash(config: dict) -> str:
    """Stable hash of a validated config (canonical JSON, sorted keys)."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
