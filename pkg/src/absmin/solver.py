"""Dirichlet solver (midpoint fixed point of the two flows) and patching.

The solver iterates  u <- (T^delta u + T_delta u) / 2  on interior nodes with
the boundary clamped to the data.  A fixed point satisfies
T^delta u - u = u - T_delta u, the discrete form of the stationarity
condition that characterises absolute minimizers; outputs are accepted only
through the checks in :mod:`absmin.verify`.

The patching operator lowers u on its small-slope region
V_sigma = {S+u < sigma} by the chained cone extension

    v(x) = max_b [u(b) - D_sigma(x -> b)],   b on the outer boundary of V_sigma,

with D_sigma a shortest-path distance whose paths run through V_sigma.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ._lattice import step_operator
from .catalog import counterexample_u, counterexample_v
from .errors import DataIncompatibilityError, DomainError
from .flow import SlopeField, default_profile, discrete_energy, flow_reach, slope_fields
from .geometry import GridDomain, build_grid, distance_matrix
from .hamiltonian import HamiltonianSpec, legendre, reflect, rotation_counterexample

log = logging.getLogger(__name__)


@dataclass(eq=False)
class SolveResult:
    u: np.ndarray
    iterations: int
    residual: float
    delta: float
    reach: float
    level: float
    converged: bool
    history: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)


@dataclass(eq=False)
class PatchResult:
    sigma: float
    V: np.ndarray
    V_boundary: np.ndarray
    u_sigma: np.ndarray
    noop: bool
    unreachable: np.ndarray
    diagnostics: dict = field(default_factory=dict)


# -- Dirichlet problem -----------------------------------------------------------

def admissible_level(grid: GridDomain, spec: HamiltonianSpec, g, levels) -> tuple[float, np.ndarray]:
    """Smallest level with g(b') - g(b) <= d_lam(b, b') on all boundary pairs.

    Admissibility is monotone in the level (edge weights grow with it), so
    the ascending table is bisected.  Returns (level, d_lam(b, x) rows).
    """
    bd = np.flatnonzero(grid.boundary.ravel())
    gb = np.asarray(g, dtype=float).ravel()[bd]
    levels = np.sort(np.asarray(levels, dtype=float))

    def test(lam):
        D = distance_matrix(grid, spec, lam, bd, "from")
        Db = D.reshape(len(bd), -1)[:, bd]
        ok = np.all(gb[None, :] - gb[:, None] <= Db * (1 + 1e-12) + 1e-12)
        return ok, D

    lo, hi = 0, len(levels) - 1
    ok, D = test(levels[hi])
    if not ok:
        raise DataIncompatibilityError("boundary data too steep for the level table")
    best = (levels[hi], D)
    while lo < hi:
        mid = (lo + hi) // 2
        ok, D = test(levels[mid])
        if ok:
            hi = mid
            best = (levels[mid], D)
        else:
            lo = mid + 1
    if best[0] != levels[lo]:
        best = (levels[lo], test(levels[lo])[1])
    return best


def cone_extension(grid, spec, g, levels=None):
    """u0(x) = min_b [g(b) + d_lam(b, x)] with the smallest admissible level."""
    if levels is None:
        levels = np.geomspace(1e-4, 1e4, 81)
    lam, D = admissible_level(grid, spec, g, levels)
    bd = np.flatnonzero(grid.boundary.ravel())
    gb = np.asarray(g, dtype=float).ravel()[bd]
    u0 = np.min(gb[:, None, None] + D, axis=0)
    u0 = np.where(grid.inside, u0, np.nan)
    u0[grid.boundary] = np.asarray(g, dtype=float)[grid.boundary]
    return u0, lam


def solve_dirichlet(grid: GridDomain, spec: HamiltonianSpec, g, delta: Optional[float] = None,
                    max_iters: int = 5000, eps: float = 1e-9, reach=None, levels=None,
                    u0: Optional[np.ndarray] = None) -> SolveResult:
    """Midpoint fixed-point iteration with boundary clamped to g.

    ``reach`` defaults to the radius of the grid stencil so that no interior
    node ever sees a truncated offset disk; ``delta`` defaults to a step for
    which that reach covers the speed bound of the initial guess.
    """
    g = np.asarray(g, dtype=float)
    bd = grid.boundary
    inter = grid.interior
    if not np.all(np.isfinite(g[bd])):
        raise DomainError("boundary data must be finite on boundary nodes")
    if u0 is None:
        if np.ptp(g[bd]) == 0:
            u0 = np.where(grid.inside, g[bd][0], np.nan)
            lam = 0.0
        else:
            u0, lam = cone_extension(grid, spec, g, levels)
    else:
        lam = float("nan")
        u0 = np.where(grid.inside, np.asarray(u0, dtype=float), np.nan)
        u0[bd] = g[bd]
    if reach is None:
        reach = float(np.max(np.hypot(*grid.offsets.T)))
    if delta is None:
        profile = default_profile(grid, spec)
        from .flow import lipschitz_bound, speed_bound

        a = speed_bound(profile, lipschitz_bound(grid, u0))
        delta = reach * grid.h / a
    up = step_operator(grid, spec, delta, reach)
    lo = step_operator(grid, reflect(spec), delta, reach)
    u = u0.copy()
    hist = []
    res = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        new = 0.5 * (up.upper(u) - lo.upper(-u))
        new = np.where(inter, new, u)
        res = float(np.nanmax(np.abs(new - u)))
        u = new
        if it % 50 == 0 or res < eps:
            hist.append((it, res))
        if res < eps:
            break
    return SolveResult(u, it, res, float(delta), float(reach), float(lam), bool(res < eps), hist)


def attach_checks(grid: GridDomain, spec: HamiltonianSpec, result: SolveResult,
                  lambdas=(0.25, 1.0, 4.0), seed: int = 0, convexity_tol: float = 1e-9) -> dict:
    """Post-hoc convexity, CICA, stationarity and energy summary stored in ``result.checks``."""
    from .verify import check_cica, check_solver_convexity, sample_cica_triples

    checks = {}
    try:
        checks["convexity"] = check_solver_convexity(grid, spec, result, tol=convexity_tol).to_dict()
    except DomainError as exc:
        checks["convexity"] = {"name": "convexity", "passed": False, "skipped": str(exc)}
    triples = sample_cica_triples(grid, list(lambdas), seed)
    checks["cica"] = check_cica(grid, spec, result.u, triples).to_dict()
    checks["stationarity"] = stationarity_residual(grid, spec, result.u, result.delta, result.reach)
    checks["energy"] = discrete_energy(grid, spec, result.u, grid.interior)
    result.checks = checks
    return checks


def stationarity_residual(grid, spec, u, delta, reach) -> float:
    """max over interior |T^delta u + T_delta u - 2u|."""
    up = step_operator(grid, spec, delta, reach).upper(u)
    lo = -step_operator(grid, reflect(spec), delta, reach).upper(-u)
    return float(np.max(np.abs(up + lo - 2 * u)[grid.interior]))


# -- patching ------------------------------------------------------------------------

def slope_consistent_weights(grid: GridDomain, spec: HamiltonianSpec, sigma: float, probe_times):
    """Edge weights min_s s (L(mid, o h / s) + sigma) over the probe times.

    Each candidate is an upper bound for L_sigma(mid, o h) (which is the
    infimum over all s > 0), so the graph distance is an upper
    discretization of d_sigma that matches the probe-based slope estimate.
    """
    src, dst, off, mid, _ = grid.edges
    disp = off * grid.h
    w = np.full(len(src), np.inf)
    for s in probe_times:
        w = np.minimum(w, s * (legendre(spec, mid, disp / s) + sigma))
    return w


def patch(grid: GridDomain, spec: HamiltonianSpec, u, sigma: float,
          slope_field: Optional[SlopeField] = None, probe_times=None) -> PatchResult:
    """Lower u on V_sigma = {S+u < sigma} by chained d_sigma cone extensions."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    u = np.asarray(u, dtype=float)
    if slope_field is None:
        if probe_times is None:
            probe_times = default_probe_times(grid)
        slope_field = slope_fields(grid, spec, u, probe_times)
    probes = slope_field.probe_times
    V = grid.interior & (slope_field.s_plus < sigma)
    if not V.any():
        return PatchResult(sigma, V, np.zeros_like(V), u.copy(), True, np.zeros_like(V),
                           {"V_size": 0})
    src, dst, *_ = grid.edges
    Vf = V.ravel()
    insf = grid.inside.ravel()
    keep = Vf[src] & insf[dst]
    bdV = np.zeros(grid.n_nodes, dtype=bool)
    bdV[dst[keep & ~Vf[dst]]] = True
    w = slope_consistent_weights(grid, spec, sigma, probes)[keep]
    n = grid.n_nodes
    uf = u.ravel()
    b_nodes = np.flatnonzero(bdV)
    C = float(np.max(uf[b_nodes]))
    # reversed restricted graph plus a super source S -> b with weight C - u(b)
    rows = np.concatenate([dst[keep], np.full(len(b_nodes), n)])
    cols = np.concatenate([src[keep], b_nodes])
    data = np.concatenate([w, C - uf[b_nodes]])
    G = sparse.csr_matrix((data, (rows, cols)), shape=(n + 1, n + 1))
    dist = csgraph.dijkstra(G, directed=True, indices=n)[:n]
    v = C - dist
    reach_ok = np.isfinite(dist) & Vf
    unreachable = (Vf & ~np.isfinite(dist)).reshape(grid.shape)
    us = uf.copy()
    us[reach_ok] = v[reach_ok]
    us[bdV] = uf[bdV]
    us = us.reshape(grid.shape)
    raw_excess = float(np.max((us - u)[V])) if V.any() else 0.0
    diag = {
        "V_size": int(V.sum()),
        "boundary_size": int(bdV.sum()),
        "unreachable": int(unreachable.sum()),
        "max_lowering": float(np.max((u - us)[grid.inside])),
        "max_raise": raw_excess,
        "min_slope_u": float(np.min(slope_field.s_plus[grid.interior])),
    }
    return PatchResult(sigma, V, bdV.reshape(grid.shape), us, False, unreachable, diag)


def default_probe_times(grid: GridDomain):
    return [8 * grid.h, 6 * grid.h, 4 * grid.h]


# -- the non-uniqueness example ----------------------------------------------------------

@dataclass(eq=False)
class CounterexampleBundle:
    grid: GridDomain
    spec: HamiltonianSpec
    u: np.ndarray
    v: np.ndarray
    energy_u: float
    energy_v: float
    boundary_residual: float
    interior_gap: float
    gap_location: list
    gap_radius: float


def counterexample_scenario(h: float = 0.05) -> CounterexampleBundle:
    """u = |x| - 1/2 and v = (2/5)(|x|^2 - 1/4) on 1/2 < |x| < 2 for the rotation H.

    Both vanish on |x| = 1/2 and equal 3/2 on |x| = 2.  Boundary nodes carry
    the values at their radial projection onto the nearer circle, so the
    two fields share their boundary data up to evaluation rounding (the
    reported boundary residual).  Energies use finite differences of the
    plain nodal values over the interior nodes.
    """
    if h > 0.05:
        raise DomainError("resolution too coarse for a connected annulus interior")
    grid = build_grid({"type": "annulus", "r_in": 0.5, "r_out": 2.0}, h)
    spec = rotation_counterexample(2.0)
    X = grid.coords
    r = np.hypot(X[..., 0], X[..., 1])
    bd = grid.boundary
    rb = np.where(np.abs(r - 0.5) < np.abs(r - 2.0), 0.5, 2.0)
    proj = X * (rb / np.where(r > 0, r, 1.0))[..., None]
    pts = np.where(bd[..., None], proj, X)
    u = np.where(grid.inside, counterexample_u(pts), np.nan)
    v = np.where(grid.inside, counterexample_v(pts), np.nan)
    bres = float(np.max(np.abs(u - v)[bd]))
    inter = grid.interior
    # energies of the functions themselves: plain nodal values everywhere
    e_u = discrete_energy(grid, spec, np.where(grid.inside, counterexample_u(X), np.nan), inter)
    e_v = discrete_energy(grid, spec, np.where(grid.inside, counterexample_v(X), np.nan), inter)
    gap_field = np.where(inter, u - v, -np.inf)
    k = int(np.argmax(gap_field))
    j, i = grid.unflat(k)
    return CounterexampleBundle(grid, spec, u, v, e_u, e_v, bres, float(gap_field[j, i]),
                                X[j, i].tolist(), float(r[j, i]))
