"""Scene files and run artifacts.

A scene is a versioned JSON document describing one experiment::

    {
      "schema": 1,
      "name": "box-quadratic",
      "domain": {"type": "box", "lo": [0, 0], "hi": [1, 1]},
      "h": 0.03125,
      "stencil": "16",
      "hamiltonian": {"kind": "quadratic_isotropic"},
      "functions": {"u": {"kind": "linear", "e": [1, 0.5]}},
      "source": [0.5, 0.5],
      "lambdas": [1.0],
      "times": [0.1, 0.2],
      "probe_times": [0.25, 0.125, 0.0625],
      "sigmas": [0.05, 0.1, 0.2],
      "tolerances": {"convexity": 1e-9},
      "checks": ["convexity", "cica"],
      "expected_fail": [],
      "seed": 0
    }

Outputs are CSV fields (header row, one row per inside node, 17
significant digits, ``inf`` spelled out), JSON reports, optional PGM
heatmaps and a manifest recording the scene hash, parameters, tolerances
and library versions.
"""
from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import GridDomain, build_grid, write_pgm
from .hamiltonian import HamiltonianSpec, spec_from_dict

SCHEMA_VERSION = 1

DEFAULT_TOLERANCES = {
    "convexity": 1e-9,
    "comparison": 1e-6,
    "slope_identity": 0.05,
    "patch_slope": 1e-9,
}

KNOWN_CHECKS = ("convexity", "cica", "slope_identity", "comparison", "small_slope_closeness")

_KNOWN_KEYS = {"schema", "name", "description", "domain", "h", "stencil", "hamiltonian", "functions",
               "source", "lambdas", "times", "probe_times", "sigmas", "tolerances", "checks",
               "expected_fail", "seed", "solver", "convexity"}


@dataclass
class Scene:
    name: str
    domain: dict
    h: float
    hamiltonian: dict
    stencil: str = "16"
    functions: dict = field(default_factory=dict)
    source: Optional[list] = None
    lambdas: list = field(default_factory=lambda: [1.0])
    times: list = field(default_factory=list)
    probe_times: Optional[list] = None
    sigmas: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    checks: list = field(default_factory=lambda: ["convexity", "cica", "slope_identity"])
    expected_fail: list = field(default_factory=list)
    seed: int = 0
    solver: dict = field(default_factory=dict)
    convexity: dict = field(default_factory=dict)
    path: Optional[str] = None
    sha256: str = ""
    raw: dict = field(default_factory=dict)

    def grid(self) -> GridDomain:
        return build_grid(self.domain, self.h, self.stencil)

    def spec(self) -> HamiltonianSpec:
        return spec_from_dict(self.hamiltonian)

    def function(self, name: str) -> dict:
        if name not in self.functions:
            raise ConfigError(f"scene field 'functions.{name}' is required for this command")
        return self.functions[name]


def _field_error(name, msg):
    return ConfigError(f"scene field '{name}': {msg}")


def _positive_list(d, name, default=None):
    v = d.get(name, default)
    if v is None:
        return None
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) for x in v):
        raise _field_error(name, "must be a list of numbers")
    if any(x <= 0 for x in v):
        raise _field_error(name, "entries must be positive")
    return [float(x) for x in v]


def parse_scene(text: str, path: Optional[str] = None) -> Scene:
    """Parse and validate a scene document.

    Raises ConfigError naming the line/column of a JSON syntax error or the
    offending field of a semantic error.
    """
    where = path or "<scene>"
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: top level must be an object")
    if d.get("schema") != SCHEMA_VERSION:
        raise _field_error("schema", f"expected {SCHEMA_VERSION}, got {d.get('schema')!r}")
    unknown = sorted(set(d) - _KNOWN_KEYS)
    if unknown:
        raise _field_error(unknown[0], "unknown field")
    for key in ("domain", "h", "hamiltonian"):
        if key not in d:
            raise _field_error(key, "missing")
    if not isinstance(d["domain"], dict) or "type" not in d["domain"]:
        raise _field_error("domain", "must be an object with a 'type'")
    h = d["h"]
    if not isinstance(h, (int, float)) or not h > 0:
        raise _field_error("h", "must be a positive number")
    if not isinstance(d["hamiltonian"], dict) or "kind" not in d["hamiltonian"]:
        raise _field_error("hamiltonian", "must be an object with a 'kind'")
    try:
        spec_from_dict(d["hamiltonian"])
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        raise _field_error("hamiltonian", str(exc)) from None
    functions = d.get("functions", {})
    if not isinstance(functions, dict):
        raise _field_error("functions", "must be an object")
    from .catalog import KINDS

    for name, entry in functions.items():
        if not isinstance(entry, dict) or entry.get("kind") not in KINDS:
            raise _field_error(f"functions.{name}", f"kind must be one of {', '.join(KINDS)}")
    tol = dict(DEFAULT_TOLERANCES)
    user_tol = d.get("tolerances", {})
    if not isinstance(user_tol, dict):
        raise _field_error("tolerances", "must be an object")
    for k, v in user_tol.items():
        if not isinstance(v, (int, float)) or not v > 0:
            raise _field_error(f"tolerances.{k}", "must be a positive number")
        tol[k] = float(v)
    checks = d.get("checks", ["convexity", "cica", "slope_identity"])
    bad = [c for c in checks if c not in KNOWN_CHECKS]
    if bad:
        raise _field_error("checks", f"unknown check {bad[0]!r}")
    source = d.get("source")
    if source is not None and (not isinstance(source, list) or len(source) != 2):
        raise _field_error("source", "must be a point [x, y]")
    times = d.get("times", [])
    if not isinstance(times, list) or any(not isinstance(t, (int, float)) or t < 0 for t in times):
        raise _field_error("times", "must be a list of nonnegative numbers")
    stencil = d.get("stencil", "16")
    return Scene(
        name=str(d.get("name", Path(where).stem)),
        domain=d["domain"],
        h=float(h),
        hamiltonian=d["hamiltonian"],
        stencil=stencil if isinstance(stencil, str) else float(stencil),
        functions=functions,
        source=source,
        lambdas=_positive_list(d, "lambdas", [1.0]),
        times=[float(t) for t in times],
        probe_times=_positive_list(d, "probe_times"),
        sigmas=_positive_list(d, "sigmas", [0.05, 0.1, 0.2]),
        tolerances=tol,
        checks=list(checks),
        expected_fail=list(d.get("expected_fail", [])),
        seed=int(d.get("seed", 0)),
        solver=dict(d.get("solver", {})),
        convexity=dict(d.get("convexity", {})),
        path=path,
        sha256=hashlib.sha256(text.encode()).hexdigest(),
        raw=d,
    )


def bundled_scenes() -> list:
    """Names of the scenes shipped with the package."""
    root = resources.files("absmin") / "scenes"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scene(path) -> Scene:
    """Load a scene file; a bare bundled-scene name is accepted as well."""
    p = Path(path)
    if p.exists():
        return parse_scene(p.read_text(), str(p))
    name = str(path)[:-5] if str(path).endswith(".json") else str(path)
    if name in bundled_scenes():
        res = resources.files("absmin") / "scenes" / f"{name}.json"
        return parse_scene(res.read_text(), f"bundled:{name}")
    raise ConfigError(f"scene file {path} not found (bundled scenes: {', '.join(bundled_scenes())})")


# -- writers ----------------------------------------------------------------------

def format_float(v) -> str:
    """17 significant digits; infinities and NaN spelled out."""
    v = float(v)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_fields_csv(path, grid: GridDomain, fields: dict):
    """One row per inside node: i, j, x, y and one column per field."""
    names = list(fields)
    jj, ii = np.nonzero(grid.inside)  # row-major: j outer, i inner
    X = grid.coords
    cols = [np.asarray(fields[n], dtype=float)[jj, ii] for n in names]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["i", "j", "x", "y"] + names) + "\n")
        for r in range(len(ii)):
            j, i = jj[r], ii[r]
            vals = [format_float(X[j, i, 0]), format_float(X[j, i, 1])]
            vals += [format_float(c[r]) for c in cols]
            fh.write(f"{i},{j}," + ",".join(vals) + "\n")


def read_fields_csv(path, grid: GridDomain) -> dict:
    """Inverse of :func:`write_fields_csv` (NaN outside the domain)."""
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {n: np.full(grid.shape, np.nan) for n in header[4:]}
    for row in body:
        i, j = int(row[0]), int(row[1])
        for n, v in zip(header[4:], row[4:]):
            out[n][j, i] = float(v)
    return out


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_heatmaps(out_dir, grid: GridDomain, fields: dict, prefix: str = ""):
    """One 8-bit PGM per field; returns the file names written."""
    names = []
    for n, v in fields.items():
        fname = f"{prefix}{n}.pgm"
        write_pgm(Path(out_dir) / fname, np.asarray(v, dtype=float), grid.inside)
        names.append(fname)
    return names


def versions() -> dict:
    import scipy

    from . import __version__

    return {"absmin": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out_dir, command: str, scene: Optional[Scene], params: dict, outputs: list):
    m = {
        "command": command,
        "scene": None if scene is None else {"name": scene.name, "path": scene.path,
                                             "sha256": scene.sha256},
        "parameters": params,
        "tolerances": None if scene is None else scene.tolerances,
        "versions": versions(),
        "outputs": sorted(outputs),
    }
    write_json(Path(out_dir) / f"manifest_{command}.json", m)
    return m
