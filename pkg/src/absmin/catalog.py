"""Catalog of test functions used for boundary data and flow inputs.

Entries are plain dictionaries so that scene files can reference them:

    {"kind": "constant", "value": 1.0}
    {"kind": "linear", "e": [1, 0.5], "c": 0.0}
    {"kind": "cone", "vertex": [0.5, 0.5], "lambda": 1.0, "direction": "from", "c": 0.0}
    {"kind": "radial_polynomial", "coeffs": [c0, c1, c2], "center": [0, 0]}
    {"kind": "quadratic_form", "matrix": [[1, 0], [0, -1]], "center": [0.5, 0.5]}
    {"kind": "counterexample_u"}   # |x| - 1/2
    {"kind": "counterexample_v"}   # (2/5)(|x|^2 - 1/4)
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .geometry import GridDomain, cone_function
from .hamiltonian import HamiltonianSpec

KINDS = ("constant", "linear", "cone", "radial_polynomial", "quadratic_form",
         "counterexample_u", "counterexample_v")


def counterexample_u(x):
    x = np.asarray(x, dtype=float)
    return np.hypot(x[..., 0], x[..., 1]) - 0.5


def counterexample_v(x):
    x = np.asarray(x, dtype=float)
    return 0.4 * (x[..., 0] ** 2 + x[..., 1] ** 2 - 0.25)


def evaluate(entry: dict, grid: GridDomain, spec: HamiltonianSpec | None = None) -> np.ndarray:
    """Evaluate a catalog entry on every lattice node (NaN outside the domain)."""
    kind = entry.get("kind")
    X = grid.coords
    if kind == "constant":
        out = np.full(grid.shape, float(entry.get("value", 0.0)))
    elif kind == "linear":
        e = np.asarray(entry["e"], dtype=float)
        out = X @ e + float(entry.get("c", 0.0))
    elif kind == "cone":
        if spec is None:
            raise ConfigError("cone entries need a Hamiltonian")
        v = grid.nearest_node(entry["vertex"])
        out = cone_function(grid, spec, float(entry["lambda"]), v,
                            entry.get("direction", "from"), float(entry.get("c", 0.0)))
    elif kind == "radial_polynomial":
        c = np.asarray(entry.get("center", [0.0, 0.0]), dtype=float)
        r = np.hypot(X[..., 0] - c[0], X[..., 1] - c[1])
        out = np.polynomial.polynomial.polyval(r, np.asarray(entry["coeffs"], dtype=float))
    elif kind == "quadratic_form":
        c = np.asarray(entry.get("center", [0.0, 0.0]), dtype=float)
        A = np.asarray(entry["matrix"], dtype=float)
        d = X - c
        out = np.einsum("...i,ij,...j->...", d, A, d) + float(entry.get("c", 0.0))
    elif kind == "counterexample_u":
        out = counterexample_u(X)
    elif kind == "counterexample_v":
        out = counterexample_v(X)
    else:
        raise ConfigError(f"unknown catalog function {kind!r}")
    out = np.array(out, dtype=float)
    out[~grid.inside] = np.nan
    return out
