"""Pass/fail checks for the absolute-minimizer criteria.

Each check returns a :class:`VerificationReport` whose ``passed`` flag is
exactly ``worst_violation <= tolerance``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import DomainError, PreconditionError
from .flow import (convexity_window, default_profile, discrete_energy, lipschitz_bound, slope_fields,
                   upper_trace)
from .geometry import GridDomain, distance_dlambda, distance_matrix
from .hamiltonian import HamiltonianSpec, SamplePlan, check_assumptions, sublevel_support

log = logging.getLogger(__name__)


@dataclass
class VerificationReport:
    name: str
    passed: bool
    worst_violation: float
    tolerance: float
    witness: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _report(name, worst, tol, **kw):
    worst = float(max(worst, 0.0))
    return VerificationReport(name, bool(worst <= tol), worst, float(tol), **kw)


def _node_witness(grid, k):
    j, i = grid.unflat(int(k))
    return {"node": int(k), "ij": [int(i), int(j)], "x": grid.coords[j, i].tolist()}


# -- convexity ------------------------------------------------------------------

def check_convexity(grid: GridDomain, spec: HamiltonianSpec, u, V, delta: float, n_steps: int,
                    tol: float = 1e-9, reach=None, window_radius: Optional[float] = None,
                    ) -> VerificationReport:
    """Second differences of k -> T^{k delta/n} u(x) on V must be >= -tol."""
    V = np.asarray(V, dtype=bool) & grid.inside
    if not V.any():
        raise DomainError("convexity subdomain is empty")
    if n_steps < 3:
        raise DomainError("need at least three flow steps")
    dt = delta / n_steps
    tr = upper_trace(grid, spec, u, dt, n_steps, reach)
    S = tr.slices[:, V]
    second = S[2:] - 2 * S[1:-1] + S[:-2]
    k, n = np.unravel_index(np.argmin(second), second.shape)
    worst = -float(second[k, n])
    params = {"delta": delta, "n_steps": n_steps, "step": dt, "reach": tr.reach, "nodes": int(V.sum())}
    if window_radius is not None:
        params["window_eta1"] = convexity_window(grid, spec, u, window_radius)
        params["window_radius"] = window_radius
    wit = _node_witness(grid, np.flatnonzero(V.ravel())[n])
    wit["k"] = int(k + 1)
    return _report("convexity", worst, tol, witness=wit, params=params,
                   details={"min_second_difference": float(second.min())})


def check_solver_convexity(grid: GridDomain, spec: HamiltonianSpec, result, n_steps: int = 4,
                           tol: float = 1e-9, window_radius: Optional[float] = 0.25,
                           ) -> VerificationReport:
    """Convexity of a solver output along the solver's own discrete flow.

    The fixed point is stationary for the lattice step (delta, reach) it was
    computed with, so the flow is sampled with exactly that step, on nodes
    whose whole flow window stays clear of the boundary band.
    """
    V = grid.inner(n_steps * result.reach * grid.h + grid.h)
    return check_convexity(grid, spec, result.u, V, n_steps * result.delta, n_steps, tol,
                           reach=result.reach, window_radius=window_radius)


# -- slope identity ------------------------------------------------------------------

def check_slope_identity(grid: GridDomain, spec: HamiltonianSpec, u, V, probe_times=None,
                         rtol: float = 0.05) -> VerificationReport:
    """max_V of the S+ estimate against the finite-difference energy on V."""
    V = np.asarray(V, dtype=bool) & grid.inside
    if not V.any():
        raise DomainError("slope subdomain is empty")
    if probe_times is None:
        probe_times = [4 * grid.h, 2 * grid.h, grid.h]
    sf = slope_fields(grid, spec, u, probe_times)
    s = float(np.max(sf.s_plus[V]))
    e = discrete_energy(grid, spec, u, V)
    gap = abs(s - e)
    rel = 0.0 if gap <= 1e-15 else gap / max(abs(e), 1e-12)
    k = np.flatnonzero(V.ravel())[np.argmax(sf.s_plus[V])]
    return _report("slope_identity", rel, rtol, witness=_node_witness(grid, k),
                   params={"probe_times": [float(p) for p in probe_times], "nodes": int(V.sum())},
                   details={"max_slope": s, "energy": e})


# -- patching ---------------------------------------------------------------------------

def check_patch_family(grid: GridDomain, spec: HamiltonianSpec, u, patches, probe_times,
                       tol: float = 1e-9) -> list:
    """Reports for a sigma-ladder of patches of u.

    * ``patch_below``: u_sigma <= u at every inside node (exact);
    * ``patch_boundary``: u_sigma = u on the outer boundary of V_sigma (exact);
    * ``patch_slope``: min over V_sigma (minus clipped probes) of S+u_sigma >= sigma - tol;
    * ``patch_monotone``: max|u - u_sigma| nondecreasing along the ladder.
    """
    u = np.asarray(u, dtype=float)
    ins = grid.inside
    below, bdry, slope, lows, per = 0.0, 0.0, 0.0, [], []
    for P in sorted(patches, key=lambda p: p.sigma):
        below = max(below, float(np.max((P.u_sigma - u)[ins])))
        if P.V_boundary.any():
            bdry = max(bdry, float(np.max(np.abs(P.u_sigma - u)[P.V_boundary])))
        lowering = float(np.max((u - P.u_sigma)[ins]))
        lows.append(lowering)
        entry = {"sigma": P.sigma, "V_size": int(P.V.sum()), "max_lowering": lowering,
                 "noop": P.noop}
        if not P.noop:
            sf = slope_fields(grid, spec, P.u_sigma, probe_times)
            W = P.V & ~sf.low_confidence
            if W.any():
                m = float(np.min(sf.s_plus[W]))
                slope = max(slope, P.sigma - m)
                entry.update({"min_slope_on_V": m, "checked_nodes": int(W.sum())})
        per.append(entry)
    mono = float(max([0.0] + [a - b for a, b in zip(lows[:-1], lows[1:])]))
    params = {"sigmas": [p["sigma"] for p in per], "probe_times": [float(p) for p in probe_times]}
    return [
        _report("patch_below", below, 0.0, params=params, details={"ladder": per}),
        _report("patch_boundary", bdry, 0.0, params=params),
        _report("patch_slope", slope, tol, params=params),
        _report("patch_monotone", mono, 0.0, params=params, details={"max_lowering": lows}),
    ]


# -- comparison with cones ---------------------------------------------------------

def region_boundary(V: np.ndarray) -> np.ndarray:
    """Nodes of V with an 8-neighbour outside V."""
    inner = ndimage.binary_erosion(V, structure=np.ones((3, 3), bool), border_value=0)
    return V & ~inner


def disk_mask(grid: GridDomain, center, radius: float) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    return grid.inside & (np.hypot(*(grid.coords - c).transpose(2, 0, 1)) <= radius)


def sample_cica_triples(grid: GridDomain, lambdas: Sequence[float], seed: int = 0,
                        n_disks: int = 5, scales=(0.25, 0.125), n_vertices: int = 3,
                        margin: Optional[float] = None):
    """Seeded (vertex, lambda, disk) triples with disks compactly inside the domain.

    For each scale, ``n_disks`` disks of radius scale * diameter / 2 are
    drawn; each gets ``n_vertices`` vertices (the first inside the disk,
    the others anywhere in the domain).
    """
    rng = np.random.default_rng(seed)
    margin = 2 * grid.h if margin is None else margin
    out = []
    pts = grid.coords
    for sc in scales:
        rad = sc * grid.diameter / 2
        ok = grid.inside & (grid.dist_to_exterior > rad + margin)
        cand = np.flatnonzero(ok.ravel())
        if cand.size == 0:
            continue
        for _ in range(n_disks):
            c = pts.reshape(-1, 2)[rng.choice(cand)]
            V = disk_mask(grid, c, rad)
            inside_v = np.flatnonzero(V.ravel())
            everywhere = np.flatnonzero(grid.inside.ravel())
            for m in range(n_vertices):
                v = rng.choice(inside_v) if m == 0 else rng.choice(everywhere)
                lam = float(lambdas[rng.integers(len(lambdas))])
                out.append((int(v), lam, V))
    return out


def check_cica(grid: GridDomain, spec: HamiltonianSpec, u, triples, tol: Optional[float] = None,
               ) -> VerificationReport:
    """Comparison with intrinsic cones from above on each (vertex, lambda, V).

    For the cone d_lam(x0, .) the maximum of u - cone over V must be attained
    on the discrete boundary of V minus {x0} (x0 itself counts as boundary).
    """
    u = np.asarray(u, dtype=float)
    if tol is None:
        tol = lipschitz_bound(grid, u) * grid.h
    worst, wit, per = -np.inf, {}, []
    cones = {}
    for x0, lam, V in triples:
        key = (x0, lam)
        if key not in cones:
            cones[key] = distance_dlambda(grid, spec, lam, x0, "from").values
        diff = u - cones[key]
        V = np.asarray(V, dtype=bool) & grid.inside
        bd = region_boundary(V)
        j0, i0 = grid.unflat(x0)
        if V[j0, i0]:
            bd = bd.copy()
            bd[j0, i0] = True
        m_int = np.max(diff[V])
        m_bd = np.max(diff[bd])
        viol = float(m_int - m_bd)
        per.append({"vertex": int(x0), "lambda": lam, "m_int": float(m_int), "m_bd": float(m_bd),
                    "violation": viol})
        if viol > worst:
            worst = viol
            k = np.flatnonzero(V.ravel())[np.argmax(diff[V])]
            wit = _node_witness(grid, k)
            wit.update({"vertex": _node_witness(grid, x0), "lambda": lam})
    return _report("cica", worst, tol, witness=wit, params={"n_triples": len(triples)},
                   details={"instances": per})


# -- comparison principle ----------------------------------------------------------------

def check_comparison(grid: GridDomain, u, v, tol: float = 1e-6) -> VerificationReport:
    """max over interior of (u - v) <= max over boundary of (u - v) + tol."""
    d = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    inter, bd = grid.interior, grid.boundary
    m_int = float(np.max(d[inter])) if inter.any() else -np.inf
    m_bd = float(np.max(d[bd]))
    k = np.flatnonzero(inter.ravel())[np.argmax(d[inter])] if inter.any() else 0
    return _report("comparison", m_int - m_bd, tol, witness=_node_witness(grid, k),
                   details={"max_interior": m_int, "max_boundary": m_bd})


# -- small-slope closeness ----------------------------------------------------------------

def small_slope_epsilon(grid, spec, s: float, normal) -> float:
    """2 diam(U) max_x max_{+-} L_s(x, +-q) for the zero-set normal q."""
    pts = grid.coords[grid.inside]
    q = np.asarray(normal, dtype=float)
    vals = np.maximum(sublevel_support(spec, pts, s, q), sublevel_support(spec, pts, s, -q))
    return float(2.0 * grid.diameter * np.max(vals))


def check_small_slope_closeness(grid: GridDomain, spec: HamiltonianSpec, u, v,
                                probe_times=None, plan: Optional[SamplePlan] = None,
                                ) -> VerificationReport:
    """Two functions agreeing on the boundary with small slopes must be close.

    The closeness budget eps(s) = 2 diam(U) max L_s(x, +-q) uses the normal
    q of the hyperplane containing the zero sets; without that hyperplane
    the budget is uncertifiable and the check fails.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    bd = grid.boundary
    mismatch = float(np.max(np.abs(u[bd] - v[bd])))
    if mismatch > 1e-9:
        raise PreconditionError(f"u and v differ on the boundary by {mismatch:.3g}")
    if probe_times is None:
        probe_times = [4 * grid.h, 2 * grid.h]
    sp_u = slope_fields(grid, spec, u, probe_times)
    sp_v = slope_fields(grid, spec, v, probe_times)
    inter = grid.interior & ~sp_u.low_confidence
    if not inter.any():
        inter = grid.interior
    s = float(max(sp_u.s_plus[inter].max(), sp_v.s_plus[inter].max(), 0.0))
    d_field = np.abs(u - v)
    d = float(np.nanmax(d_field[grid.inside]))
    k = np.flatnonzero(grid.inside.ravel())[np.nanargmax(d_field[grid.inside])]
    plan = plan or SamplePlan(x_samples=grid.coords[grid.inside][:: max(1, grid.inside.sum() // 200)])
    rep = check_assumptions(spec, plan)
    params = {"slope": s, "distance": d, "probe_times": list(map(float, probe_times))}
    if not rep.a2_zeroset_ok:
        return VerificationReport("small_slope_closeness", False, d, float("nan"),
                                  _node_witness(grid, k), params,
                                  {"reason": "precondition/uncertifiable: zero sets are not planar",
                                   "plane_deviation": rep.a2_plane_deviation})
    eps = small_slope_epsilon(grid, spec, max(s, 1e-300), rep.zero_set_hyperplane_normal)
    params["epsilon"] = eps
    return _report("small_slope_closeness", d - eps, 0.0, witness=_node_witness(grid, k),
                   params=params)


def calibrate_small_slope(grid: GridDomain, spec: HamiltonianSpec, vertex: int, lambdas,
                          ) -> list:
    """(s, d) pairs from cone pairs with shrinking level.

    For each level lam: u = d_lam(vertex, .) and v is the lower cone
    extension of u's boundary values, v(x) = max_b [u(b) - d_lam(x, b)].
    Both have slope at most lam and agree on the boundary.
    """
    bd_nodes = np.flatnonzero(grid.boundary.ravel())
    out = []
    for lam in sorted(lambdas, reverse=True):
        u = distance_dlambda(grid, spec, lam, vertex).values
        D = distance_matrix(grid, spec, lam, bd_nodes, direction="to")  # D[b, x] = d(x, b)
        ub = u.ravel()[bd_nodes]
        v = np.max(ub[:, None, None] - D, axis=0)
        v = np.where(grid.inside, v, np.nan)
        d = float(np.nanmax(np.abs(u - v)))
        out.append({"lambda": float(lam), "s": float(lam), "d": d,
                    "d_over_scale": d / (np.sqrt(lam) * grid.diameter)})
    return out


def reports_to_json(reports) -> list:
    return [r.to_dict() for r in reports]
