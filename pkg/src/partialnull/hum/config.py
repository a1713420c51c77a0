"""JSON-friendly descriptions of coupling functions and initial data on the mesh."""
from __future__ import annotations

import numpy as np


def strided_inverse_square(x, stride: int = 15):
    """sum_{j>=1} j^{-2} cos(stride j x) summed exactly.

    Uses sum_j cos(j t) / j^2 = pi^2/6 - pi t/2 + t^2/4 for t in [0, 2 pi].
    """
    t = np.mod(stride * np.asarray(x, dtype=float), 2 * np.pi)
    return np.pi ** 2 / 6 - np.pi * t / 2 + t ** 2 / 4


def alpha_from_spec(spec: dict):
    kind = spec["kind"]
    if kind == "constant":
        v = float(spec["value"])
        return lambda x: np.full(np.shape(x), v)
    if kind == "strided_inverse_square":
        G = int(spec.get("stride", 15))
        return lambda x: strided_inverse_square(x, G)
    if kind == "cosine":
        c = np.asarray(spec["coeffs"], dtype=float)
        p = np.arange(c.size, dtype=float)
        return lambda x: np.cos(np.multiply.outer(np.asarray(x, dtype=float), p)) @ c
    raise ValueError(f"unknown alpha kind {kind!r}")


def field_from_spec(terms):
    """sum amp sin(freq x) for terms [[amp, freq], ...]; an empty list gives 0."""
    terms = [(float(a), float(f)) for a, f in terms]

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, k in terms:
            out += a * np.sin(k * x)
        return out
    return f
