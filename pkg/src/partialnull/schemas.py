"""JSON schemas and defaults for the command-line configs. Unknown keys are rejected."""
import copy
import math

NUM = {"anyOf": [{"type": "number"}, {"type": "string", "pattern": "pi"}]}
POLY = {"anyOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}
MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": POLY}}
DOMAIN = {"type": "object", "additionalProperties": False, "required": ["a", "b"],
          "properties": {"a": NUM, "b": NUM}}
INTERVAL = {"type": "array", "items": NUM, "minItems": 2, "maxItems": 2}
INT_LIST = {"type": "array", "items": {"type": "integer"}, "minItems": 1}

CHECK = {
    "type": "object", "additionalProperties": False, "required": ["A", "B", "p"],
    "properties": {
        "A": MATRIX, "B": MATRIX, "p": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["constant", "time"]},
        "T": NUM, "tol_rel": {"type": "number", "exclusiveMinimum": 0},
        "oracle": {"type": "boolean"}, "transform": {"type": "boolean"},
        "scan_times": {"type": "array", "items": NUM},
        "random_instances": {
            "type": "object", "additionalProperties": False,
            "properties": {"count": {"type": "integer", "minimum": 1},
                           "n_max": {"type": "integer", "minimum": 1, "maximum": 8},
                           "entry_bound": {"type": "integer", "minimum": 1}}},
    },
}
CHECK_DEFAULTS = {"mode": "constant", "T": 1.0, "tol_rel": 1e-10, "oracle": True, "transform": False,
                  "scan_times": []}

ALPHA_SERIES = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "cosine_coeffs": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "geometric": {"type": "object", "additionalProperties": False, "required": ["rate"],
                      "properties": {"rate": {"type": "number"}, "alpha0": {"type": "number"}}},
        "strided_power": {"type": "object", "additionalProperties": False, "required": ["stride"],
                          "properties": {"stride": {"type": "integer", "minimum": 1},
                                         "power": {"type": "number", "exclusiveMinimum": 1}}},
    },
    "minProperties": 1, "maxProperties": 1,
}
SYNTH = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "domain": DOMAIN, "alpha": ALPHA_SERIES,
        "y0": {"type": "array", "items": {"type": "number"}},
        "z0": {"type": "array", "items": {"type": "number"}},
        "omega": INTERVAL, "T": NUM, "K": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["double", "extended_precision", "regularized"]},
        "n_steps": {"type": "integer", "minimum": 1}, "gamma_cap": {"type": "number"},
        "n_samples": {"type": "integer", "minimum": 2},
    },
}
SYNTH_DEFAULTS = {"domain": {"a": 0.0, "b": "pi"}, "alpha": {"geometric": {"rate": 5.0}},
                  "y0": [1.0], "z0": [0.0, 1.0], "omega": [1.0, 2.0], "T": 0.5, "K": 8,
                  "mode": "double", "n_steps": 256, "gamma_cap": 1e8, "n_samples": 201}

WITNESS = {
    "type": "object", "additionalProperties": False,
    "properties": {"m": {"type": "integer", "minimum": 1}, "G": {"type": "integer", "minimum": 1},
                   "T": NUM, "M_list": INT_LIST, "n_quad": {"type": "integer", "minimum": 64},
                   "cross_check": {"type": "boolean"}},
}
WITNESS_DEFAULTS = {"m": 7, "G": 15, "T": 0.005, "M_list": list(range(2, 15)), "n_quad": 64, "cross_check": True}

ALPHA_FUNC = {
    "type": "object", "additionalProperties": False, "required": ["kind"],
    "properties": {"kind": {"enum": ["constant", "strided_inverse_square", "cosine"]},
                   "value": {"type": "number"}, "stride": {"type": "integer", "minimum": 1},
                   "coeffs": {"type": "array", "items": {"type": "number"}}},
}
SINE_TERMS = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}
HUM = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "domain": DOMAIN, "T": NUM, "dt_mode": {"enum": ["per_T", "literal"]},
        "n_steps": {"type": "integer", "minimum": 1}, "dt": NUM, "omega": INTERVAL,
        "alpha": ALPHA_FUNC, "y0": SINE_TERMS, "z0": SINE_TERMS,
        "n_cells": INT_LIST, "eps_exponent": {"type": "number"},
        "cg_tol": {"type": "number", "exclusiveMinimum": 0}, "cg_max_iter": {"type": "integer", "minimum": 1},
        "method": {"enum": ["cr", "cg"]},
    },
}
HUM_DEFAULTS = {"domain": {"a": 0.0, "b": "2pi"}, "T": 0.005, "dt_mode": "per_T", "n_steps": 400,
                "dt": 0.0025, "omega": [0.0, "pi"], "alpha": {"kind": "constant", "value": 1.0},
                "y0": [[100.0, 1.0]], "z0": [[100.0, 1.0]], "n_cells": [50, 100, 200, 300],
                "eps_exponent": 4.0, "cg_tol": 1e-10, "cg_max_iter": 5000, "method": "cr"}

SCHEMAS = {"check": CHECK, "synthesize": SYNTH, "witness": WITNESS, "hum": HUM}
DEFAULTS = {"check": CHECK_DEFAULTS, "synthesize": SYNTH_DEFAULTS, "witness": WITNESS_DEFAULTS, "hum": HUM_DEFAULTS}


def with_defaults(command: str, cfg: dict) -> dict:
    out = copy.deepcopy(DEFAULTS[command])
    out.update(copy.deepcopy(cfg))
    return out
