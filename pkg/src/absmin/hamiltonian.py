"""Hamiltonians H(x, p), their sublevel geometry and convex duals.

Every evaluator is vectorised: points ``x`` and covectors ``p``/``q`` are
arrays whose last axis has length 2, and the leading axes broadcast.

The quantities computed here are

* ``eval_h``             H(x, p)
* ``radial_extent``      sup{t >= 0 : H(x, t e) <= lam} for unit e
* ``sublevel_support``   L_lam(x, q) = sup{p.q : H(x, p) <= lam}
* ``legendre``           L(x, q) = sup_p {p.q - H(x, p)}
* ``coercivity_profile`` inner/outer sublevel radii, the minorant M(t) and
  the speed cap a_lam
* ``check_assumptions``  sampled certificates for convexity, the planar
  zero set and the two-sided ball condition
"""
from __future__ import annotations

import csv
import logging
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    CoercivityError,
    ConfigError,
    DomainError,
    NotApplicableError,
    TableRangeError,
)

log = logging.getLogger(__name__)

KINDS = (
    "quadratic_isotropic",
    "riemannian",
    "norm_power",
    "rotation_counterexample",
    "powered",
    "reflected",
    "tabulated",
)

P_BOUND = 1.0e3
BISECT_TOL = 1.0e-8
LAMBDA_CAP = 1.0e8
N_DIRECTIONS = 256


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """A Hamiltonian from the built-in families.

    ``params`` carries the family scalars; ``base`` is the wrapped spec for
    the ``powered`` and ``reflected`` kinds.
    """

    kind: str
    params: dict = field(default_factory=dict)
    base: Optional["HamiltonianSpec"] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.kind in ("powered", "reflected") and self.base is None:
            raise ConfigError(f"{self.kind} Hamiltonian needs a base spec")
        if self.kind == "powered" and not float(self.params.get("a", 0.0)) > 1.0:
            raise DomainError("power exponent must be > 1")
        if self.kind == "norm_power":
            if float(self.params.get("s", 2.0)) < 1.0 or float(self.params.get("r", 2.0)) < 1.0:
                raise DomainError("norm_power needs r >= 1 and s >= 1")

    @property
    def x_independent(self) -> bool:
        if self.kind in ("powered", "reflected"):
            return self.base.x_independent
        if self.kind == "riemannian":
            return self.params.get("field", "constant") == "constant"
        if self.kind == "tabulated":
            return len(np.atleast_2d(self.params["x_samples"])) == 1
        return self.kind in ("quadratic_isotropic", "norm_power")

    @property
    def closed_form(self) -> bool:
        """True when support functions and extents have exact formulas."""
        if self.kind in ("powered", "reflected"):
            return self.base.closed_form
        return self.kind != "tabulated"

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind, "params": _jsonable(self.params)}
        if self.base is not None:
            out["base"] = self.base.to_dict()
        return out

    def __repr__(self):
        inner = f", base={self.base!r}" if self.base is not None else ""
        shown = {k: v for k, v in self.params.items() if k not in ("values", "x_samples")}
        return f"HamiltonianSpec({self.kind!r}, {shown}{inner})"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


# -- constructors -------------------------------------------------------------

def quadratic_isotropic() -> HamiltonianSpec:
    return HamiltonianSpec("quadratic_isotropic")


def riemannian(matrix=None, *, axes=None, omega=0.0) -> HamiltonianSpec:
    """H(x,p) = <A(x)p, p>.

    Either a constant SPD ``matrix`` or a rotating field
    A(x) = R(omega x_1) diag(axes) R(omega x_1)^T.
    """
    if axes is not None:
        a1, a2 = (float(a) for a in axes)
        if min(a1, a2) <= 0:
            raise DomainError("matrix field must be positive definite")
        return HamiltonianSpec("riemannian", {"field": "rotating", "axes": [a1, a2], "omega": float(omega)})
    A = np.eye(2) if matrix is None else np.asarray(matrix, dtype=float)
    if A.shape != (2, 2) or not np.allclose(A, A.T) or np.linalg.eigvalsh(A).min() <= 0:
        raise DomainError("matrix must be symmetric positive definite 2x2")
    return HamiltonianSpec("riemannian", {"field": "constant", "matrix": A.tolist()})


def norm_power(r: float = 2.0, s: float = 1.0) -> HamiltonianSpec:
    """H(p) = ||p||_r ** s."""
    return HamiltonianSpec("norm_power", {"r": float(r), "s": float(s)})


def rotation_counterexample(half_width: float = 2.0) -> HamiltonianSpec:
    """H(x,p) = H0(O(x) p) with O(x) rotating x/|x| onto e_1.

    H0(p) = max(|p_1| - w, 0)^2 + p_2^2, whose zero set is the segment
    [-w, w] x {0}; the rotated zero sets sweep out a disk of radius w.
    """
    return HamiltonianSpec("rotation_counterexample", {"half_width": float(half_width)})


def power_transform(spec: HamiltonianSpec, a: float) -> HamiltonianSpec:
    """Wrap ``spec`` so that it evaluates to H(x,p) ** a (a > 1)."""
    if not a > 1.0:
        raise DomainError(f"power exponent must be > 1, got {a}")
    return HamiltonianSpec("powered", {"a": float(a)}, base=spec)


@lru_cache(maxsize=128)
def reflect(spec: HamiltonianSpec) -> HamiltonianSpec:
    """The Hamiltonian p -> H(x, -p) (memoised, so repeated calls share one spec)."""
    return HamiltonianSpec("reflected", {}, base=spec)


def tabulated(x_samples, p_axis1, p_axis2, values) -> HamiltonianSpec:
    """H sampled on a regular covector lattice at a set of points.

    ``values[m, i, j]`` is H(x_samples[m], (p_axis1[i], p_axis2[j])).
    Evaluation uses the nearest sample point and bilinear interpolation in p.
    """
    xs = np.atleast_2d(np.asarray(x_samples, dtype=float))
    p1 = np.asarray(p_axis1, dtype=float)
    p2 = np.asarray(p_axis2, dtype=float)
    vals = np.asarray(values, dtype=float).reshape(len(xs), len(p1), len(p2))
    if np.any(np.diff(p1) <= 0) or np.any(np.diff(p2) <= 0):
        raise ConfigError("covector axes must be strictly increasing")
    return HamiltonianSpec(
        "tabulated", {"x_samples": xs, "p_axis1": p1, "p_axis2": p2, "values": vals}
    )


def tabulated_from_csv(path) -> HamiltonianSpec:
    """Read rows (x1, x2, p1, p2, H) into a tabulated spec."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec[:5]])
            except ValueError:
                continue  # header
    if not rows:
        raise ConfigError(f"no rows in {path}")
    arr = np.array(rows)
    xs, xinv = np.unique(arr[:, :2], axis=0, return_inverse=True)
    p1 = np.unique(arr[:, 2])
    p2 = np.unique(arr[:, 3])
    vals = np.full((len(xs), len(p1), len(p2)), np.nan)
    vals[xinv.ravel(), np.searchsorted(p1, arr[:, 2]), np.searchsorted(p2, arr[:, 3])] = arr[:, 4]
    if np.isnan(vals).any():
        raise ConfigError("tabulated Hamiltonian CSV does not fill a full lattice")
    return tabulated(xs, p1, p2, vals)


def tabulate(spec: HamiltonianSpec, x_samples, p_axis1, p_axis2) -> HamiltonianSpec:
    """Sample an existing spec onto a table."""
    xs = np.atleast_2d(np.asarray(x_samples, dtype=float))
    P1, P2 = np.meshgrid(p_axis1, p_axis2, indexing="ij")
    P = np.stack([P1, P2], axis=-1)
    vals = np.stack([eval_h(spec, x, P) for x in xs])
    return tabulated(xs, p_axis1, p_axis2, vals)


def spec_from_dict(d: dict) -> HamiltonianSpec:
    """Build a spec from its JSON scene representation."""
    kind = d.get("kind")
    params = dict(d.get("params", {}))
    if kind == "quadratic_isotropic":
        return quadratic_isotropic()
    if kind == "riemannian":
        if params.get("field", "constant") == "rotating":
            return riemannian(axes=params["axes"], omega=params.get("omega", 0.0))
        return riemannian(params.get("matrix"))
    if kind == "norm_power":
        return norm_power(params.get("r", 2.0), params.get("s", 1.0))
    if kind == "rotation_counterexample":
        return rotation_counterexample(params.get("half_width", 2.0))
    if kind == "powered":
        return power_transform(spec_from_dict(d["base"]), params["a"])
    if kind == "reflected":
        return reflect(spec_from_dict(d["base"]))
    if kind == "tabulated":
        if "csv" in params:
            return tabulated_from_csv(params["csv"])
        return tabulated(params["x_samples"], params["p_axis1"], params["p_axis2"], params["values"])
    raise ConfigError(f"unknown Hamiltonian kind {kind!r}")


# -- per-family helpers -------------------------------------------------------

def _arr(v):
    return np.asarray(v, dtype=float)


def _dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]


def _norm(a):
    return np.hypot(a[..., 0], a[..., 1])


def _rotating_frame(spec, x):
    """Rotation angle of the rotating Riemannian field at x."""
    return spec.params["omega"] * x[..., 0]


def _inv_quadratic_form(spec, x, q):
    """q^T A(x)^{-1} q for the Riemannian family."""
    if spec.params.get("field", "constant") == "rotating":
        a1, a2 = spec.params["axes"]
        th = _rotating_frame(spec, x)
        c, s = np.cos(th), np.sin(th)
        # components of q in the eigenframe R(th)
        u1 = c * q[..., 0] + s * q[..., 1]
        u2 = -s * q[..., 0] + c * q[..., 1]
        return u1 * u1 / a1 + u2 * u2 / a2
    Ainv = np.linalg.inv(np.asarray(spec.params["matrix"]))
    return (Ainv[0, 0] * q[..., 0] * q[..., 0] + 2 * Ainv[0, 1] * q[..., 0] * q[..., 1]
            + Ainv[1, 1] * q[..., 1] * q[..., 1])


def _quadratic_form(spec, x, p):
    """p^T A(x) p for the Riemannian family."""
    if spec.params.get("field", "constant") == "rotating":
        a1, a2 = spec.params["axes"]
        th = _rotating_frame(spec, x)
        c, s = np.cos(th), np.sin(th)
        u1 = c * p[..., 0] + s * p[..., 1]
        u2 = -s * p[..., 0] + c * p[..., 1]
        return a1 * u1 * u1 + a2 * u2 * u2
    A = np.asarray(spec.params["matrix"])
    return A[0, 0] * p[..., 0] ** 2 + 2 * A[0, 1] * p[..., 0] * p[..., 1] + A[1, 1] * p[..., 1] ** 2


def _eig_range(spec):
    """(min, max) eigenvalue of the Riemannian field over all x."""
    if spec.params.get("field", "constant") == "rotating":
        a = spec.params["axes"]
        return min(a), max(a)
    w = np.linalg.eigvalsh(np.asarray(spec.params["matrix"]))
    return float(w[0]), float(w[-1])


def _rotate_to_radial(x, p):
    """O(x) p, with O(x) taking x/|x| to e_1 (identity at the origin)."""
    r = _norm(x)
    safe = np.where(r > 0, r, 1.0)
    c = np.where(r > 0, x[..., 0] / safe, 1.0)
    s = np.where(r > 0, x[..., 1] / safe, 0.0)
    return np.stack([c * p[..., 0] + s * p[..., 1], -s * p[..., 0] + c * p[..., 1]], axis=-1)


def _lp_norm(v, r):
    a = np.abs(v)
    if np.isinf(r):
        return np.maximum(a[..., 0], a[..., 1])
    if r == 1:
        return a[..., 0] + a[..., 1]
    if r == 2:
        return np.hypot(a[..., 0], a[..., 1])
    return (a[..., 0] ** r + a[..., 1] ** r) ** (1.0 / r)


def _dual_exponent(r):
    if np.isinf(r):
        return 1.0
    if r == 1:
        return np.inf
    return r / (r - 1.0)


def _p_bound(spec):
    if spec.kind in ("powered", "reflected"):
        return _p_bound(spec.base)
    if spec.kind == "tabulated":
        p1, p2 = spec.params["p_axis1"], spec.params["p_axis2"]
        return float(min(-p1[0], p1[-1], -p2[0], p2[-1]))
    return P_BOUND


# -- evaluation ---------------------------------------------------------------

def eval_h(spec: HamiltonianSpec, x, p) -> np.ndarray:
    """H(x, p); exact for built-in kinds, bilinear in p for tables."""
    x, p = _arr(x), _arr(p)
    k = spec.kind
    if k == "quadratic_isotropic":
        return p[..., 0] ** 2 + p[..., 1] ** 2
    if k == "riemannian":
        return _quadratic_form(spec, x, p)
    if k == "norm_power":
        return _lp_norm(p, spec.params["r"]) ** spec.params["s"]
    if k == "rotation_counterexample":
        w = spec.params["half_width"]
        op = _rotate_to_radial(x, p)
        return np.maximum(np.abs(op[..., 0]) - w, 0.0) ** 2 + op[..., 1] ** 2
    if k == "powered":
        return eval_h(spec.base, x, p) ** spec.params["a"]
    if k == "reflected":
        return eval_h(spec.base, x, -p)
    return _eval_table(spec, x, p)


def _nearest_sample(spec, x):
    xs = spec.params["x_samples"]
    if len(xs) == 1:
        return np.zeros(x.shape[:-1], dtype=int)
    d2 = ((x[..., None, :] - xs) ** 2).sum(-1)
    return np.argmin(d2, axis=-1)


def _eval_table(spec, x, p):
    p1, p2, vals = spec.params["p_axis1"], spec.params["p_axis2"], spec.params["values"]
    x, p = np.broadcast_arrays(x, p)
    tol = 1e-12 * max(1.0, abs(p1[-1]), abs(p2[-1]))
    if (np.any(p[..., 0] < p1[0] - tol) or np.any(p[..., 0] > p1[-1] + tol)
            or np.any(p[..., 1] < p2[0] - tol) or np.any(p[..., 1] > p2[-1] + tol)):
        raise TableRangeError(
            f"covector outside table range [{p1[0]}, {p1[-1]}] x [{p2[0]}, {p2[-1]}]"
        )
    m = _nearest_sample(spec, x)
    a = np.clip(p[..., 0], p1[0], p1[-1])
    b = np.clip(p[..., 1], p2[0], p2[-1])
    i = np.clip(np.searchsorted(p1, a, side="right") - 1, 0, len(p1) - 2)
    j = np.clip(np.searchsorted(p2, b, side="right") - 1, 0, len(p2) - 2)
    fa = (a - p1[i]) / (p1[i + 1] - p1[i])
    fb = (b - p2[j]) / (p2[j + 1] - p2[j])
    return ((1 - fa) * (1 - fb) * vals[m, i, j] + fa * (1 - fb) * vals[m, i + 1, j]
            + (1 - fa) * fb * vals[m, i, j + 1] + fa * fb * vals[m, i + 1, j + 1])


# -- sublevel geometry ----------------------------------------------------------

def unit_directions(n: int = N_DIRECTIONS, offset: float = 0.0) -> np.ndarray:
    th = offset + 2.0 * np.pi * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], axis=-1)


def radial_extent_bisect(spec, x, e, lam, tol=BISECT_TOL, p_bound=None) -> np.ndarray:
    """sup{t : H(x, t e) <= lam} by bisection on the nondecreasing ray map."""
    x, e = np.broadcast_arrays(_arr(x), _arr(e))
    lam = np.broadcast_to(_arr(lam), x.shape[:-1])
    pb = _p_bound(spec) if p_bound is None else p_bound
    hi_val = eval_h(spec, x, pb * e)
    if np.any(hi_val <= lam):
        raise CoercivityError(f"sublevel set reaches the p-bound {pb}")
    lo = np.zeros(x.shape[:-1])
    hi = np.full(x.shape[:-1], pb)
    n_iter = int(np.ceil(np.log2(pb / tol))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        ok = eval_h(spec, x, mid[..., None] * e) <= lam
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return lo


def radial_extent(spec, x, e, lam, method: str = "auto") -> np.ndarray:
    """Radius of {p : H(x,p) <= lam} along the unit direction e."""
    x, e = _arr(x), _arr(e)
    lam = _arr(lam)
    if np.any(lam < 0):
        raise DomainError("level must be nonnegative")
    if method == "sampled" or not spec.closed_form:
        return radial_extent_bisect(spec, x, e, lam)
    k = spec.kind
    if k == "quadratic_isotropic":
        return np.broadcast_to(np.sqrt(lam), np.broadcast_shapes(x.shape[:-1], e.shape[:-1], lam.shape)) * 1.0
    if k == "riemannian":
        return np.sqrt(lam / _quadratic_form(spec, x, e))
    if k == "norm_power":
        return lam ** (1.0 / spec.params["s"]) / _lp_norm(e, spec.params["r"])
    if k == "rotation_counterexample":
        w = spec.params["half_width"]
        c = np.abs(_rotate_to_radial(x, e))
        c1, c2 = c[..., 0], c[..., 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_flat = np.where(c2 > 0, np.sqrt(lam) / np.where(c2 > 0, c2, 1.0), np.inf)
            t_out = w * c1 + np.sqrt(np.maximum(lam - (w * c2) ** 2, 0.0))
        return np.where(t_flat * c1 <= w, t_flat, t_out)
    if k == "powered":
        return radial_extent(spec.base, x, e, lam ** (1.0 / spec.params["a"]), method)
    if k == "reflected":
        return radial_extent(spec.base, x, -e, lam, method)
    raise NotApplicableError(k)


def extent_bounds(spec, x, lam, n_dirs: int = N_DIRECTIONS, extra_dirs=None, method="auto"):
    """(min, max) over directions of the radial extent at each point x.

    Closed-form kinds return the exact extrema over all directions; sampled
    kinds use ``n_dirs`` uniform directions plus ``extra_dirs``.
    """
    x = _arr(x)
    lam = float(lam)
    if lam < 0:
        raise DomainError("level must be nonnegative")
    shape = x.shape[:-1]
    if method == "auto" and spec.closed_form:
        k = spec.kind
        if k == "quadratic_isotropic":
            v = np.full(shape, np.sqrt(lam))
            return v, v.copy()
        if k == "riemannian":
            lo, hi = _eig_range(spec)
            return np.full(shape, np.sqrt(lam / hi)), np.full(shape, np.sqrt(lam / lo))
        if k == "norm_power":
            r, s = spec.params["r"], spec.params["s"]
            base = lam ** (1.0 / s)
            diag = 2.0 ** (1.0 / r - 0.5) if np.isfinite(r) else 2.0 ** -0.5
            # ||e||_r over unit e ranges between 1 and diag
            big, small = max(1.0, diag), min(1.0, diag)
            return np.full(shape, base / big), np.full(shape, base / small)
        if k == "rotation_counterexample":
            w = spec.params["half_width"]
            return np.full(shape, np.sqrt(lam)), np.full(shape, w + np.sqrt(lam))
        if k == "powered":
            return extent_bounds(spec.base, x, lam ** (1.0 / spec.params["a"]), n_dirs, extra_dirs, method)
        if k == "reflected":
            return extent_bounds(spec.base, x, lam, n_dirs, extra_dirs, method)
    dirs = unit_directions(n_dirs)
    if extra_dirs is not None:
        ed = _arr(extra_dirs).reshape(-1, 2)
        dirs = np.concatenate([dirs, ed / _norm(ed)[:, None]])
    rho = radial_extent_bisect(spec, x[..., None, :], dirs, lam)
    return rho.min(axis=-1), rho.max(axis=-1)


def support_sampled(spec, x, lam, q, n_dirs: int = N_DIRECTIONS) -> np.ndarray:
    """L_lam(x, q) as max over sampled boundary points rho(e) e . q.

    The direction of q itself is always added to the sample set, so the
    result is at least rho(q/|q|) |q|.
    """
    x, q = np.broadcast_arrays(_arr(x), _arr(q))
    lam = float(lam)
    qn = _norm(q)
    qhat = np.where(qn[..., None] > 0, q / np.where(qn > 0, qn, 1.0)[..., None], np.array([1.0, 0.0]))
    dirs = unit_directions(n_dirs)
    rho = radial_extent_bisect(spec, x[..., None, :], dirs, lam)
    proj = np.einsum("kd,...d->...k", dirs, q)
    best = (rho * proj).max(axis=-1)
    rq = radial_extent_bisect(spec, x, qhat, lam)
    return np.where(qn > 0, np.maximum(best, rq * qn), 0.0)


def sublevel_support(spec: HamiltonianSpec, x, lam, q, method: str = "auto") -> np.ndarray:
    """L_lam(x, q) = sup{p . q : H(x, p) <= lam}."""
    x, q = _arr(x), _arr(q)
    lam = float(lam)
    if lam < 0:
        raise DomainError("level must be nonnegative")
    if method == "sampled" or not spec.closed_form:
        return support_sampled(spec, x, lam, q)
    k = spec.kind
    if k == "quadratic_isotropic":
        return np.sqrt(lam) * _norm(q) + 0.0 * x[..., 0]
    if k == "riemannian":
        return np.sqrt(lam) * np.sqrt(_inv_quadratic_form(spec, x, q))
    if k == "norm_power":
        r, s = spec.params["r"], spec.params["s"]
        return lam ** (1.0 / s) * _lp_norm(q, _dual_exponent(r)) + 0.0 * x[..., 0]
    if k == "rotation_counterexample":
        # sublevel set of H0 is the segment [-w, w] x {0} thickened by sqrt(lam)
        w = spec.params["half_width"]
        oq = _rotate_to_radial(x, q)
        return w * np.abs(oq[..., 0]) + np.sqrt(lam) * _norm(q)
    if k == "powered":
        return sublevel_support(spec.base, x, lam ** (1.0 / spec.params["a"]), q, method)
    if k == "reflected":
        return sublevel_support(spec.base, x, lam, -q, method)
    raise NotApplicableError(k)


# -- convex dual ------------------------------------------------------------------

def legendre(spec: HamiltonianSpec, x, q, method: str = "auto") -> np.ndarray:
    """L(x, q) = sup_p {p . q - H(x, p)}."""
    x, q = _arr(x), _arr(q)
    k = spec.kind
    if method == "auto":
        if k == "quadratic_isotropic":
            return 0.25 * (q[..., 0] ** 2 + q[..., 1] ** 2) + 0.0 * x[..., 0]
        if k == "riemannian":
            return 0.25 * _inv_quadratic_form(spec, x, q)
        if k == "norm_power":
            r, s = spec.params["r"], spec.params["s"]
            nq = _lp_norm(q, _dual_exponent(r)) + 0.0 * x[..., 0]
            if s == 1.0:
                return np.where(nq <= 1.0, 0.0, np.inf)
            return (s - 1.0) * (nq / s) ** (s / (s - 1.0))
        if k == "rotation_counterexample":
            w = spec.params["half_width"]
            oq = _rotate_to_radial(x, q)
            return w * np.abs(oq[..., 0]) + 0.25 * (q[..., 0] ** 2 + q[..., 1] ** 2)
        if k == "reflected":
            return legendre(spec.base, x, -q, method)
    return legendre_search(spec, x, q)


def legendre_search(spec, x, q, lam_cap: float = LAMBDA_CAP, iters: int = 90) -> np.ndarray:
    """sup over lam >= 0 of L_lam(x,q) - lam by golden-section search.

    lam -> L_lam(x, q) is concave, so the objective is unimodal. The bracket
    is grown by doubling until the objective stops increasing.
    """
    x, q = np.broadcast_arrays(_arr(x), _arr(q))
    shape = x.shape[:-1]

    def f(lam):
        return _support_levels(spec, x, lam, q) - lam

    hi = np.ones(shape)
    f_hi = f(hi)
    grow = np.ones(shape, dtype=bool)
    while grow.any():
        cand = np.where(grow, 2.0 * hi, hi)
        if np.any(cand > lam_cap):
            raise CoercivityError("Legendre search exceeded the level cap")
        f_c = f(cand)
        up = grow & (f_c > f_hi)
        hi = np.where(up, cand, hi)
        f_hi = np.where(up, f_c, f_hi)
        grow = up
    lo = np.zeros(shape)
    hi = 2.0 * hi
    g = (np.sqrt(5.0) - 1.0) / 2.0
    a = hi - g * (hi - lo)
    b = lo + g * (hi - lo)
    fa, fb = f(a), f(b)
    for _ in range(iters):
        left = fa >= fb
        hi = np.where(left, b, hi)
        lo = np.where(left, lo, a)
        b_new = np.where(left, a, lo + g * (hi - lo))
        a_new = np.where(left, hi - g * (hi - lo), b)
        fb_new = np.where(left, fa, np.nan)
        fa_new = np.where(left, np.nan, fb)
        a, b = a_new, b_new
        need_a = np.isnan(fa_new)
        need_b = np.isnan(fb_new)
        fa = np.where(need_a, f(a), fa_new)
        fb = np.where(need_b, f(b), fb_new)
    best = np.maximum(np.maximum(fa, fb), f(np.zeros(shape)))
    return np.maximum(best, 0.0)


def _support_levels(spec, x, lam, q):
    """L_lam(x, q) with an array of levels (one per point)."""
    lam = np.asarray(lam, dtype=float)
    if spec.closed_form:
        k = spec.kind
        if k == "powered":
            return _support_levels(spec.base, x, lam ** (1.0 / spec.params["a"]), q)
        if k == "reflected":
            return _support_levels(spec.base, x, lam, -q)
        if k == "quadratic_isotropic":
            return np.sqrt(lam) * _norm(q)
        if k == "riemannian":
            return np.sqrt(lam) * np.sqrt(_inv_quadratic_form(spec, x, q))
        if k == "norm_power":
            r, s = spec.params["r"], spec.params["s"]
            return lam ** (1.0 / s) * _lp_norm(q, _dual_exponent(r))
        if k == "rotation_counterexample":
            w = spec.params["half_width"]
            return w * np.abs(_rotate_to_radial(x, q)[..., 0]) + np.sqrt(lam) * _norm(q)
    flat_l = lam.ravel()
    xs = np.broadcast_to(x, lam.shape + (2,)).reshape(-1, 2)
    qs = np.broadcast_to(q, lam.shape + (2,)).reshape(-1, 2)
    out = np.empty(flat_l.shape)
    for lv in np.unique(flat_l):
        sel = flat_l == lv
        out[sel] = support_sampled(spec, xs[sel], lv, qs[sel], n_dirs=64)
    return out.reshape(lam.shape)


# -- coercivity profile -------------------------------------------------------------

@dataclass
class CoercivityProfile:
    """Sampled coercivity constants of a Hamiltonian.

    ``M(t) = max over sampled lam of (r_lam - lam / t)`` (and M(0) = 0) is
    the superlinearity minorant; ``a_of_lambda[i]`` is the smallest tabulated
    speed a with M(a) >= R_lam.
    """

    lambda_samples: np.ndarray
    r_of_lambda: np.ndarray
    R_of_lambda: np.ndarray
    t_grid: np.ndarray
    M_table: np.ndarray
    a_of_lambda: np.ndarray

    def M(self, t):
        t = np.asarray(t, dtype=float)
        lam = self.lambda_samples
        r = self.r_of_lambda
        with np.errstate(divide="ignore"):
            vals = r - lam / np.maximum(t[..., None], 1e-300)
        out = np.maximum(vals.max(axis=-1), 0.0)
        return np.where(t > 0, out, 0.0)

    def speed_for(self, threshold: float, strict: bool = False) -> float:
        """Smallest tabulated a with M(a) >= threshold (> when strict)."""
        ok = self.M_table > threshold if strict else self.M_table >= threshold
        if not ok.any():
            return np.inf
        return float(self.t_grid[np.argmax(ok)])

    def r_at(self, lam: float) -> float:
        return float(np.interp(lam, self.lambda_samples, self.r_of_lambda))

    def R_at(self, lam: float) -> float:
        """Outer radius at lam; the next tabulated level above is used."""
        i = np.searchsorted(self.lambda_samples, lam)
        if i >= len(self.lambda_samples):
            return np.inf
        return float(self.R_of_lambda[i])

    def a_at(self, lam: float) -> float:
        return self.speed_for(self.R_at(lam))


def coercivity_profile(spec, lambda_samples, x_samples, n_dirs: int = N_DIRECTIONS,
                       extra_dirs=None, t_grid=None, method="auto") -> CoercivityProfile:
    """r_lam and R_lam as min/max radial extent over sampled points and directions."""
    lam = np.asarray(lambda_samples, dtype=float).ravel()
    xs = np.asarray(x_samples, dtype=float).reshape(-1, 2)
    if lam.size == 0 or xs.size == 0:
        raise ConfigError("coercivity profile needs nonempty level and point samples")
    if np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
        raise ConfigError("level samples must be positive and ascending")
    r = np.empty(lam.size)
    R = np.empty(lam.size)
    for i, lv in enumerate(lam):
        lo, hi = extent_bounds(spec, xs, lv, n_dirs, extra_dirs, method)
        r[i], R[i] = lo.min(), hi.max()
    if t_grid is None:
        t_grid = np.geomspace(1e-3, 1e4, 2001)
    t_grid = np.asarray(t_grid, dtype=float)
    prof = CoercivityProfile(lam, r, R, t_grid, np.zeros_like(t_grid), np.zeros_like(lam))
    prof.M_table = prof.M(t_grid)
    prof.a_of_lambda = np.array([prof.speed_for(Rl) for Rl in R])
    return prof


# -- assumption checks -----------------------------------------------------------

@dataclass
class SamplePlan:
    """Where and how densely assumption checks are sampled."""

    x_samples: np.ndarray
    n_dirs: int = 64
    lambdas: tuple = (0.25, 1.0, 4.0, 16.0)
    n_pairs: int = 400
    p_radius: float = 4.0
    zero_eps: float = 1e-12
    plane_tol: float = 1e-2
    convex_tol: float = 1e-9
    seed: int = 0


@dataclass
class AssumptionReport:
    a1_convex_ok: bool
    a1_worst_violation: float
    a1_witness: dict
    a2_zeroset_ok: bool
    a2_min_ok: bool
    a2_plane_deviation: float
    a2_witness: dict
    zero_set_hyperplane_normal: Optional[np.ndarray]
    zero_set_radius: float
    a3_balls_ok: bool
    a3_r: np.ndarray
    a3_R: np.ndarray
    a3_lambdas: np.ndarray
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        n = self.zero_set_hyperplane_normal
        return {
            "a1_convex_ok": bool(self.a1_convex_ok),
            "a1_worst_violation": float(self.a1_worst_violation),
            "a2_zeroset_ok": bool(self.a2_zeroset_ok),
            "a2_min_ok": bool(self.a2_min_ok),
            "a2_plane_deviation": float(self.a2_plane_deviation),
            "zero_set_radius": float(self.zero_set_radius),
            "zero_set_hyperplane_normal": None if n is None else [float(v) for v in n],
            "a3_balls_ok": bool(self.a3_balls_ok),
            "a3_lambdas": self.a3_lambdas.tolist(),
            "a3_r": self.a3_r.tolist(),
            "a3_R": self.a3_R.tolist(),
            "notes": list(self.notes),
        }


def check_assumptions(spec: HamiltonianSpec, plan: SamplePlan) -> AssumptionReport:
    """Finite-sample certificates for convexity, the zero set and ball bounds.

    Never raises for a failed assumption: failures are carried in the report.
    """
    xs = np.asarray(plan.x_samples, dtype=float).reshape(-1, 2)
    rng = np.random.default_rng(plan.seed)
    notes = []

    # convexity in p by midpoint tests on a sign-symmetric pair set
    rad = plan.p_radius * np.sqrt(rng.uniform(size=(plan.n_pairs, 2)))
    ang = rng.uniform(0, 2 * np.pi, size=(plan.n_pairs, 2))
    P = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
    P = np.concatenate([P, -P])
    p1 = P[None, :, 0, :]
    p2 = P[None, :, 1, :]
    X = xs[:, None, :]
    try:
        h1 = eval_h(spec, X, p1)
        h2 = eval_h(spec, X, p2)
        hm = eval_h(spec, X, 0.5 * (p1 + p2))
        viol = hm - 0.5 * (h1 + h2)
        w = np.unravel_index(np.argmax(viol), viol.shape)
        a1_worst = float(max(viol[w], 0.0))
        a1_wit = {"x": xs[w[0]].tolist(), "p1": P[w[1], 0].tolist(), "p2": P[w[1], 1].tolist()}
        nonneg = float(min(h1.min(), h2.min(), hm.min()))
    except TableRangeError:
        notes.append("pair radius exceeds table; convexity sampled on the table lattice only")
        a1_worst, a1_wit, nonneg = _table_convexity(spec)
    a1_ok = a1_worst <= plan.convex_tol

    # H(x,0) = 0 = min H(x,.)
    h0 = eval_h(spec, xs, np.zeros_like(xs))
    a2_min_ok = bool(np.all(np.abs(h0) <= plan.convex_tol) and nonneg >= -plan.convex_tol)
    if not a2_min_ok:
        notes.append("H(x,0)=0=min H fails on samples")

    # zero set: support function of {H <= zero_eps}.  The zero sets lie in
    # the line with normal n iff their support vanishes in both directions
    # +-n, so the planarity defect is min over n of max_x max(h_x(n), h_x(-n)).
    # Support functions see thin (segment-like) zero sets in every
    # direction, unlike radial extents along a fixed direction fan.
    n_ang = max(4 * plan.n_dirs, 360)
    theta = np.linspace(0.0, np.pi, n_ang, endpoint=False)
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    dirs = np.concatenate([normals, -normals])
    hz = sublevel_support(spec, xs[:, None, :], plan.zero_eps, dirs[None])
    zr = float(hz.max())
    both = np.maximum(hz[:, :n_ang], hz[:, n_ang:])
    per_normal = both.max(axis=0)
    best = int(np.argmin(per_normal))

    def defect(th):
        n = np.array([np.cos(th), np.sin(th)])
        return np.maximum(sublevel_support(spec, xs, plan.zero_eps, n),
                          sublevel_support(spec, xs, plan.zero_eps, -n))

    step = np.pi / n_ang
    ref = minimize_scalar(lambda th: float(defect(th).max()), method="bounded",
                          bounds=(theta[best] - step, theta[best] + step), options={"xatol": 1e-10})
    th = float(ref.x) if ref.fun < per_normal[best] else float(theta[best])
    normal = np.array([np.cos(th), np.sin(th)])
    if normal[np.argmax(np.abs(normal))] < 0:
        normal = -normal
    along = defect(th)
    dev = float(along.max())
    k = int(np.argmax(along))
    wit = {"x": xs[k].tolist(), "normal": normal.tolist(), "support_along_normal": dev,
           "point": (float(hz[k].max()) * dirs[int(np.argmax(hz[k]))]).tolist()}
    a2_ok = a2_min_ok and dev <= plan.plane_tol
    if not a2_ok:
        notes.append(f"zero-set union is not planar: max out-of-plane deviation {dev:.3g}")

    # two-sided ball condition
    lam = np.asarray(plan.lambdas, dtype=float)
    try:
        prof = coercivity_profile(spec, lam, xs, n_dirs=plan.n_dirs)
        r, R = prof.r_of_lambda, prof.R_of_lambda
        a3_ok = bool(np.all(r > 0) and np.all(np.isfinite(R)) and np.all(np.diff(r) >= 0)
                     and r[-1] > r[0])
    except CoercivityError as exc:
        notes.append(f"coercivity: {exc}")
        r = np.full(lam.size, np.nan)
        R = np.full(lam.size, np.inf)
        a3_ok = False

    return AssumptionReport(
        a1_convex_ok=bool(a1_ok), a1_worst_violation=a1_worst, a1_witness=a1_wit,
        a2_zeroset_ok=bool(a2_ok), a2_min_ok=a2_min_ok, a2_plane_deviation=dev,
        a2_witness=wit, zero_set_hyperplane_normal=normal if a2_ok else None,
        zero_set_radius=zr, a3_balls_ok=a3_ok, a3_r=r, a3_R=R, a3_lambdas=lam, notes=notes,
    )


def _table_convexity(spec):
    vals = spec.params["values"]
    # midpoint convexity along both lattice axes and the diagonals
    worst, wit = 0.0, {}
    for sl_a, sl_m, sl_b in (
        ((slice(None), slice(None, -2), slice(None)), (slice(None), slice(1, -1), slice(None)),
         (slice(None), slice(2, None), slice(None))),
        ((slice(None), slice(None), slice(None, -2)), (slice(None), slice(None), slice(1, -1)),
         (slice(None), slice(None), slice(2, None))),
        ((slice(None), slice(None, -2), slice(None, -2)), (slice(None), slice(1, -1), slice(1, -1)),
         (slice(None), slice(2, None), slice(2, None))),
    ):
        v = vals[sl_m] - 0.5 * (vals[sl_a] + vals[sl_b])
        if v.size and v.max() > worst:
            worst = float(v.max())
            wit = {"index": [int(i) for i in np.unravel_index(np.argmax(v), v.shape)]}
    return worst, wit, float(vals.min())
