"""Run configuration: JSON documents validated against a shipped schema."""
import copy
import json
from dataclasses import dataclass, fields
from importlib import resources
from typing import Optional

import jsonschema

from .errors import ConfigInvalid


def _load_data(name):
    return json.loads(resources.files("heatstab").joinpath("data").joinpath(name).read_text("utf-8"))


SCHEMA = _load_data("config.schema.json")
DEFAULTS = _load_data("default.json")


@dataclass(frozen=True)
class RunConfig:
    alpha: float
    c: float
    rho: float
    N_override: Optional[int]
    gamma_spacing: float
    require_contraction: bool
    M: int
    dt: float
    T: float
    theta: float
    blowup_cap: float
    max_steps: int
    save_every: Optional[int]
    controller: bool
    decay_tol: float
    nonlinearity: dict
    initial_data: dict
    outputs: str
    mode: str
    snapshots: bool
    backend: Optional[str]

    def to_dict(self):
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    @property
    def seed(self):
        return self.initial_data["seed"]


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _error_key(err):
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        allowed = err.schema.get("properties", {})
        extra = sorted(k for k in err.instance if k not in allowed)
        name = extra[0] if extra else "?"
        return f"{path}.{name}" if path else name
    return path or "<root>"


def validate(doc):
    """Validate a merged configuration dict; returns a :class:`RunConfig`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigInvalid(_error_key(err), err.message)
    if doc["dt"] > doc["T"]:
        raise ConfigInvalid("dt", f"dt={doc['dt']} exceeds T={doc['T']}")
    nl = doc["nonlinearity"]
    if nl["kind"] == "custom-table":
        from .pde_sim import Nonlinearity
        try:
            Nonlinearity("custom-table", table=nl.get("table"))
        except ValueError as exc:
            raise ConfigInvalid("nonlinearity.table", str(exc)) from None
    return RunConfig(**doc)


def parse_override(text):
    """``"a.b=value"`` -> (["a", "b"], value); values are JSON, else strings."""
    if "=" not in text:
        raise ConfigInvalid(text, "override must look like key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigInvalid(text, "empty key in override")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(doc, overrides):
    doc = copy.deepcopy(doc)
    for text in overrides:
        path, value = parse_override(text)
        node = doc
        for part in path[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[path[-1]] = value
    return doc


def load_config(path=None, overrides=(), seed=None):
    """Defaults, then the file at ``path``, then ``--set`` overrides, then ``seed``."""
    doc = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigInvalid("config", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("config", f"{path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigInvalid("config", "top level must be an object")
        doc = _merge(doc, user)
    doc = apply_overrides(doc, overrides)
    if seed is not None:
        doc["initial_data"]["seed"] = int(seed)
    return validate(doc)
