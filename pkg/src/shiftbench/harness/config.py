"""Declarative experiment configuration (versioned JSON, schema-validated)."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from ..errors import ConfigError

CONFIG_VERSION = 1

_ATTACK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["method"],
    "properties": {
        "method": {"enum": ["fgsm", "bim", "mim", "dim", "deepfool", "nes", "spsa"]},
        "mode": {"enum": ["budgeted", "min_perturbation"]},
        "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
        "steps": {"type": ["integer", "null"], "minimum": 1},
        "est_samples": {"type": ["integer", "null"], "minimum": 2},
        "target": {"enum": ["supervised", "zero_shot"]},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "seed", "dataset"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "classes": {"type": "array", "items": {"type": "string"},
                            "minItems": 2},
                "n_train_per_class": {"type": "integer", "minimum": 1},
                "n_test_per_class": {"type": "integer", "minimum": 1},
                "image_size": {"type": "integer", "minimum": 8},
                "shift_variant": {"enum": ["none", "background", "texture"]},
            },
        },
        "corpus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "template": {"type": "string"},
                "word_overlay_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "text_only_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "overlays_per_image": {"type": "integer", "minimum": 1},
            },
        },
        "supervised": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "arch": {"enum": ["linear", "mlp"]},
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "pool": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "dual_encoder": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "pool": {"type": "integer", "minimum": 1},
                "embed_dim": {"type": "integer", "minimum": 2},
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 2},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "temperature_init": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "zero_shot": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "prompts": {"type": "array", "items": {"type": "string"},
                            "minItems": 1},
            },
        },
        "typographic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_coords": {"type": "integer", "minimum": 0},
                "font_scale": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "attacks": {"type": "array", "items": _ATTACK_SCHEMA},
        "report": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "formats": {"type": "array",
                            "items": {"enum": ["json", "csv", "scatter"]}},
            },
        },
    },
}

DEFAULTS = {
    "workers": 1,
    "dataset": {"classes": ["ring", "cross", "disk", "bars"],
                "n_train_per_class": 150, "n_test_per_class": 40,
                "image_size": 32, "shift_variant": "none"},
    "corpus": {"template": "a photo of a {label}", "word_overlay_prob": 0.35,
               "text_only_prob": 0.25, "overlays_per_image": 2},
    "supervised": {"arch": "mlp", "hidden": [64], "pool": 2, "epochs": 30,
                   "batch_size": 32, "learning_rate": 0.05},
    "dual_encoder": {"hidden": [96], "pool": 2, "embed_dim": 32, "epochs": 40,
                     "batch_size": 32, "learning_rate": 0.004,
                     "temperature_init": 10.0},
    "zero_shot": {"prompts": ["a photo of a {label}"]},
    "typographic": {"k_coords": 4, "font_scale": None},
    "attacks": [],
    "report": {"formats": ["json", "csv", "scatter"]},
}


def validate_config(doc: dict) -> dict:
    """Validate against the schema and fill per-section defaults."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid experiment config: {exc.message}") from exc
    merged = json.loads(json.dumps(DEFAULTS))
    for key, value in doc.items():
        if isinstance(value, dict) and key in merged:
            merged[key].update(value)
        else:
            merged[key] = value
    merged["version"] = CONFIG_VERSION
    return merged


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(doc)
