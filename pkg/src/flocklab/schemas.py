"""Config document schemas for the command-line entry points.

Configs are JSON objects validated before execution; defaults below are
merged in afterwards so that every report can embed the fully resolved
config it ran with.
"""

from __future__ import annotations

_INITIAL = {
    "type": "object",
    "required": ["density", "density_params", "velocity", "velocity_params"],
    "properties": {
        "density": {
            "enum": ["uniform-box", "truncated-gaussian", "two-bump"]
        },
        "density_params": {"type": "object"},
        "velocity": {
            "enum": ["constant", "linear-shear", "sinusoid", "two-speed-split"]
        },
        "velocity_params": {"type": "object"},
    },
    "additionalProperties": False,
}

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}

SCHEMAS = {
    "simulate": {
        "type": "object",
        "required": ["d", "alpha", "N", "T", "M", "initial", "seed"],
        "properties": {
            "d": {"type": "integer", "minimum": 1},
            "alpha": _POSITIVE,
            "N": {"type": "integer", "minimum": 1},
            "T": _POSITIVE,
            "M": _POSITIVE,
            "initial": _INITIAL,
            "seed": _SEED,
            "tol": _POSITIVE,
            "snapshots": {"type": "integer", "minimum": 2},
            "kernel_floor": _NONNEG,
            "fixed_step": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "eta_ladder": {"type": "array", "items": _POSITIVE, "minItems": 1},
            "bin_fractions": {"type": "array", "items": _POSITIVE, "minItems": 1},
        },
        "additionalProperties": False,
    },
    "diagnose": {
        "type": "object",
        "required": ["input"],
        "properties": {
            "input": {"type": "string"},
            "eta_ladder": {"type": "array", "items": _POSITIVE, "minItems": 1},
            "bin_fractions": {"type": "array", "items": _POSITIVE, "minItems": 1},
        },
        "additionalProperties": False,
    },
    "residual": {
        "type": "object",
        "required": ["input"],
        "properties": {
            "input": {"type": "string"},
            "battery_size": {"type": "integer", "minimum": 1},
            "battery_seed": _SEED,
            "h": {"type": ["number", "null"], "exclusiveMinimum": 0},
        },
        "additionalProperties": False,
    },
    "mfstudy": {
        "type": "object",
        "required": [
            "d", "alpha", "horizon", "bound", "initial", "seed",
            "n_list", "probe_times",
        ],
        "properties": {
            "d": {"type": "integer", "minimum": 1},
            "alpha": _POSITIVE,
            "horizon": _POSITIVE,
            "bound": _POSITIVE,
            "initial": _INITIAL,
            "seed": _SEED,
            "n_list": {
                "type": "array",
                "items": {"type": "integer", "minimum": 1},
                "minItems": 2,
            },
            "probe_times": {"type": "array", "items": _NONNEG, "minItems": 1},
            "h": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "tol": _POSITIVE,
            "quad_points": {"type": "integer", "minimum": 2},
            "battery_size": {"type": "integer", "minimum": 1},
            "battery_seed": _SEED,
            "kernel_floor": _NONNEG,
            "dbl_cap": {"type": "integer", "minimum": 1},
            "threads": {"type": "integer", "minimum": 1},
        },
        "additionalProperties": False,
    },
    "pairstudy": {
        "type": "object",
        "required": ["alpha", "eps_list", "v1", "v2"],
        "properties": {
            "alpha": _POSITIVE,
            "eps_list": {"type": "array", "items": _POSITIVE, "minItems": 1},
            "v1": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            "v2": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            "horizon": _POSITIVE,
            "grid_points": {"type": "integer", "minimum": 16},
            "tol": _POSITIVE,
        },
        "additionalProperties": False,
    },
}

DEFAULTS = {
    "simulate": {
        "tol": 1e-8,
        "snapshots": 33,
        "kernel_floor": 0.0,
        "fixed_step": None,
        "eta_ladder": [1.0, 0.3, 0.1, 0.03, 0.01],
        "bin_fractions": [1 / 8, 1 / 16, 1 / 32],
    },
    "diagnose": {
        "eta_ladder": [1.0, 0.3, 0.1, 0.03, 0.01],
        "bin_fractions": [1 / 8, 1 / 16, 1 / 32],
    },
    "residual": {"battery_size": 24, "battery_seed": 0, "h": None},
    "mfstudy": {
        "h": None,
        "tol": 1e-7,
        "quad_points": 33,
        "battery_size": 24,
        "battery_seed": 0,
        "kernel_floor": 0.0,
        "dbl_cap": 2000,
        "threads": 1,
    },
    "pairstudy": {"horizon": 8.0, "grid_points": 4096, "tol": 1e-10},
}


def resolve(kind: str, doc: dict) -> dict:
    """Validate a config document and merge in the defaults."""
    import jsonschema

    jsonschema.validate(doc, SCHEMAS[kind])
    out = dict(DEFAULTS.get(kind, {}))
    out.update(doc)
    return out
