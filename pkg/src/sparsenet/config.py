"""Experiment configuration: JSON schema, default filling and validation."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

_TRAIN = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "learning_rate": {"type": "number", "exclusiveMinimum": 0, "default": 0.01},
        "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1, "default": 0.9},
        "batch_size": {"type": "integer", "minimum": 1, "default": 100},
        "epochs": {"type": ["integer", "null"], "minimum": 0, "default": None},
        "steps": {"type": ["integer", "null"], "minimum": 0, "default": None},
        "eval_every": {"type": "integer", "minimum": 1, "default": 600},
    },
}

_PRUNE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["target_sparsity"],
    "properties": {
        "target_sparsity": {"type": "number", "minimum": 0, "maximum": 1},
        "start_step": {"type": ["integer", "null"], "minimum": 0, "default": None},
        "end_step": {"type": ["integer", "null"], "minimum": 1, "default": None},
        "prune_interval": {"type": "integer", "minimum": 1, "default": 200},
        "exponent": {"type": "number", "exclusiveMinimum": 0, "default": 3},
        "keep_dense": {"type": "array", "items": {"type": "string"}, "default": []},
    },
}

_LAYERS = {"type": ["array", "null"], "items": {"type": "string"}, "default": None}

_TOPOLOGY = {
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {"kind": {"const": "dense"}},
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "radices", "blocks"],
            "properties": {
                "kind": {"const": "radix"},
                "radices": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                "blocks": {"type": "array", "minItems": 2, "items": {"type": "integer", "minimum": 1}},
                "trim": {"type": ["integer", "null"], "minimum": 0, "default": None},
                "layers": _LAYERS,
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "sparsity"],
            "properties": {
                "kind": {"const": "random"},
                "sparsity": {"type": "number", "minimum": 0, "maximum": 1},
                "seed": {"type": "integer", "minimum": 0, "default": 0},
                "layers": _LAYERS,
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "path"],
            "properties": {
                "kind": {"const": "bundle"},
                "path": {"type": "string"},
                "layers": _LAYERS,
            },
        },
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "sparsenet experiment",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "dataset"],
    "properties": {
        "model": {"enum": ["lenet300", "lenet5"]},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["mnist", "cifar10", "synthetic"]},
                "path": {"type": ["string", "null"], "default": None},
                "train_limit": {"type": ["integer", "null"], "minimum": 1, "default": None},
                "test_limit": {"type": ["integer", "null"], "minimum": 1, "default": None},
            },
        },
        "topology": {"default": {"kind": "dense"}, **_TOPOLOGY},
        "train": {"default": {}, **_TRAIN},
        "prune": {"default": None, "oneOf": [{"type": "null"}, _PRUNE]},
        "seed": {"type": "integer", "minimum": 0, "default": 0},
        "repeat": {"type": "integer", "minimum": 1, "default": 1},
        "seeds": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}, "default": None},
        "precision": {"enum": ["f32", "f64"], "default": "f32"},
        "use_csr": {"type": "boolean", "default": False},
        "out": {"type": ["string", "null"], "default": None},
    },
}

# an initial training period of two epochs before pruning starts, then a ten
# epoch ramp; both only apply when the config leaves the steps unset
DEFAULT_PRUNE_START_EPOCHS = 2
DEFAULT_PRUNE_RAMP_EPOCHS = 10


def _fill(schema: dict, value):
    """Insert schema defaults into ``value`` (recursively, objects only)."""
    if not isinstance(value, dict):
        return value
    if "oneOf" in schema:
        # validation already guaranteed exactly one branch matches
        branch = next(v for v in schema["oneOf"] if jsonschema.Draft202012Validator(v).is_valid(value))
        return _fill(branch, value)
    for key, sub in schema.get("properties", {}).items():
        if key not in value and "default" in sub:
            value[key] = copy.deepcopy(sub["default"])
        if key in value:
            value[key] = _fill(sub, value[key])
    return value


def validate(config: dict) -> dict:
    """Validate ``config`` against the schema and return a default-filled copy."""
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    out = _fill(SCHEMA, copy.deepcopy(config))
    train = out["train"]
    if train["epochs"] is not None and train["steps"] is not None:
        raise ConfigError("train: give either epochs or steps, not both")
    if out["seeds"] is not None and len(out["seeds"]) != out["repeat"]:
        raise ConfigError(f"seeds lists {len(out['seeds'])} values but repeat is {out['repeat']}")
    return out


def load(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return validate(raw)


def run_seeds(config: dict) -> list[int]:
    if config["seeds"] is not None:
        return list(config["seeds"])
    return [config["seed"] + i for i in range(config["repeat"])]
