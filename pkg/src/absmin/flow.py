"""Hamilton–Jacobi flows T^t u, T_t u, slope functionals and energies.

Two evaluation routes are offered for the upper flow:

``stepping``
    iterate the one-step lattice operator (default; the semigroup law
    holds exactly by construction);
``kernel``
    the localized sup  T^t u(x) = max_{|y - x| <= r} [u(y) - L_t(x, y)]
    with an action kernel per point -- the closed-form t L((y-x)/t) when H
    does not depend on x, a per-node action run otherwise.  The radius r
    follows the localization recipe; when t exceeds the window in which
    the localized sup is valid the call falls back to stepping and says so.

The lower flow is obtained by reflection, T_t u = -T^t_reflected(-u), and
:func:`t_lower_direct` computes it from the lower operator for cross-checks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._lattice import step_operator
from .action import action_dp
from .errors import DomainError
from .geometry import GridDomain
from .hamiltonian import CoercivityProfile, HamiltonianSpec, coercivity_profile, eval_h, reflect

log = logging.getLogger(__name__)

MAX_REACH = 24
DEFAULT_STEP_CELLS = 8


@dataclass(eq=False)
class FlowTrace:
    """Slices of T^{k delta} u (direction 'upper') or T_{k delta} u ('lower')."""

    direction: str
    delta: float
    times: np.ndarray
    slices: np.ndarray
    reach: float
    radius: float
    notes: list = field(default_factory=list)


@dataclass(eq=False)
class SlopeField:
    """Difference-quotient estimates of S+u and S-u.

    ``s_plus``/``s_minus`` are maxima of the quotients over the probe times;
    ``*_smallest`` are the quotients at the smallest probe time (the one
    closest to the limit s -> 0); ``q_plus``/``q_minus`` hold the full
    quotient sequence, one row per probe time in the order given;
    ``monotone_*`` flags nodes whose quotient is nondecreasing in the probe
    time; ``low_confidence`` marks nodes where the optimal offset of some
    probe, plus one cell, reaches the mask edge (the sup may be clipped).
    """

    s_plus: np.ndarray
    s_minus: np.ndarray
    probe_times: np.ndarray
    q_plus: np.ndarray
    q_minus: np.ndarray
    s_plus_smallest: np.ndarray
    s_minus_smallest: np.ndarray
    monotone_plus: np.ndarray
    monotone_minus: np.ndarray
    low_confidence: np.ndarray


# -- constants from the coercivity profile --------------------------------------

def lipschitz_bound(grid: GridDomain, u: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """max over stencil edges of |u(y) - u(x)| / |y - x| (edges inside ``mask``)."""
    src, dst, _, _, length = grid.edges
    uf = np.asarray(u, dtype=float).ravel()
    keep = np.ones(len(src), dtype=bool)
    if mask is not None:
        m = np.asarray(mask).ravel()
        keep = m[src] & m[dst]
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(uf[dst[keep]] - uf[src[keep]]) / length[keep]))


def default_profile(grid: GridDomain, spec: HamiltonianSpec, n_levels: int = 41,
                    max_points: int = 64) -> CoercivityProfile:
    """Coercivity profile over a geometric level ladder and sampled nodes."""
    lam = np.geomspace(1e-3, 1e3, n_levels)
    pts = grid.coords[grid.inside]
    if len(pts) > max_points and not spec.closed_form:
        idx = np.linspace(0, len(pts) - 1, max_points).astype(int)
        pts = pts[idx]
    return coercivity_profile(spec, lam, pts)


def speed_bound(profile: CoercivityProfile, K: float) -> float:
    """a_K: smallest tabulated speed with M(a_K) > K, at least 2."""
    return max(2.0, profile.speed_for(K, strict=True))


def eta0(profile: CoercivityProfile, alpha: float, r: float) -> float:
    """Localization window: r / a with M(a) > alpha / r + 1."""
    a = profile.speed_for(alpha / r + 1.0, strict=True)
    return r / a if np.isfinite(a) else 0.0


def a0(profile: CoercivityProfile, spec: HamiltonianSpec, r: float, grid: GridDomain) -> float:
    """Smallest a with (a/2) M(a/2) > C + 1, C = max L over |q| <= 1."""
    from .hamiltonian import legendre

    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    q = np.stack([np.cos(th), np.sin(th)], -1)
    pts = grid.coords[grid.inside]
    pts = pts[np.linspace(0, len(pts) - 1, min(len(pts), 32)).astype(int)]
    C = float(np.max(legendre(spec, pts[:, None, :], q[None])))
    t = profile.t_grid
    ok = (t / 2) * profile.M(t / 2) > C + 1.0
    return float(t[np.argmax(ok)]) if ok.any() else np.inf


def convexity_window(grid, spec, u, r: float, profile: Optional[CoercivityProfile] = None) -> float:
    """eta_1 = min{eta_0(alpha, r/2), r / a_K, r / a_0(r)} for u on U_r."""
    profile = profile or default_profile(grid, spec)
    inner = grid.inner(r / 2)
    vals = np.asarray(u)[grid.inside]
    alpha = float(vals.max() - vals.min())
    K = lipschitz_bound(grid, u, inner)
    aK = speed_bound(profile, K)
    return float(min(eta0(profile, alpha, r / 2), r / aK, r / a0(profile, spec, r, grid)))


def flow_reach(grid, spec, u, delta, profile=None, cap=MAX_REACH) -> int:
    """Offset radius (in cells) covering curve speeds up to a_K for one step."""
    profile = profile or default_profile(grid, spec)
    K = lipschitz_bound(grid, u)
    a = speed_bound(profile, K)
    r = int(np.ceil(a * delta / grid.h)) + 1
    if r > cap:
        log.info("flow reach %d capped at %d", r, cap)
        r = cap
    return r


def _steps_for(t, delta, h):
    if delta is None:
        n = max(1, int(round(t / (DEFAULT_STEP_CELLS * h))))
    else:
        n = max(1, int(round(t / delta)))
    return n, t / n


# -- flows ------------------------------------------------------------------------

def _finite_u(grid, u):
    u = np.asarray(u, dtype=float)
    if u.shape != grid.shape:
        raise DomainError(f"field shape {u.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(u[grid.inside])):
        raise DomainError("u must be finite on inside nodes")
    return u


def upper_trace(grid, spec, u, delta, n_steps, reach=None, profile=None) -> FlowTrace:
    """T^{k delta} u for k = 0..n_steps by the one-step upper operator."""
    u = _finite_u(grid, u)
    R = reach or flow_reach(grid, spec, u, delta, profile)
    op = step_operator(grid, spec, delta, R)
    out = [np.where(grid.inside, u, np.nan)]
    for _ in range(n_steps):
        out.append(op.upper(out[-1]))
    return FlowTrace("upper", float(delta), delta * np.arange(n_steps + 1), np.stack(out),
                     float(R), float(R * grid.h))


def lower_trace(grid, spec, u, delta, n_steps, reach=None, profile=None) -> FlowTrace:
    """T_{k delta} u via reflection of the upper trace."""
    u = _finite_u(grid, u)
    R = reach or flow_reach(grid, spec, u, delta, profile)
    tr = upper_trace(grid, reflect(spec), -u, delta, n_steps, R, profile)
    return FlowTrace("lower", tr.delta, tr.times, -tr.slices, tr.reach, tr.radius)


def lower_trace_direct(grid, spec, u, delta, n_steps, reach=None, profile=None) -> FlowTrace:
    u = _finite_u(grid, u)
    R = reach or flow_reach(grid, spec, u, delta, profile)
    op = step_operator(grid, spec, delta, R)
    out = [np.where(grid.inside, u, np.nan)]
    for _ in range(n_steps):
        out.append(op.lower(out[-1]))
    return FlowTrace("lower", float(delta), delta * np.arange(n_steps + 1), np.stack(out),
                     float(R), float(R * grid.h))


def _kernel_upper(grid, spec, u, t, profile, info):
    vals = u[grid.inside]
    alpha = float(vals.max() - vals.min())
    K = lipschitz_bound(grid, u)
    aK = speed_bound(profile, K)
    r = min(aK * t + 2 * grid.h, grid.diameter)
    window = eta0(profile, alpha, r)
    info.update({"radius": r, "eta0": window, "a_K": aK, "K": K})
    if t >= window and r < grid.diameter:
        info["fallback"] = f"t={t:.3g} outside localization window {window:.3g}; used stepping"
        log.info(info["fallback"])
        return None
    R = r / grid.h
    if spec.x_independent:
        # the kernel t L((y - x)/t) is exactly one lattice step of length t
        return step_operator(grid, spec, t, R).upper(u)
    n, dt = _steps_for(t, None, grid.h)
    out = np.full(grid.shape, np.nan)
    pts = grid.coords
    for k in np.flatnonzero(grid.inside.ravel()):
        j, i = grid.unflat(k)
        A = action_dp(grid, spec, k, dt, n, reach=min(MAX_REACH, np.ceil(r / (n * grid.h)) + 1))
        Lt = A.slices[-1]
        ball = grid.inside & (np.hypot(*(pts - pts[j, i]).transpose(2, 0, 1)) <= r)
        out[j, i] = np.max(np.where(ball, u - Lt, -np.inf))
    return out


def t_upper(grid: GridDomain, spec: HamiltonianSpec, u, t: float, method: str = "stepping",
            delta: Optional[float] = None, reach=None, profile=None, info: Optional[dict] = None):
    """T^t u on the lattice.  ``info`` (if given) receives run metadata."""
    u = _finite_u(grid, u)
    info = {} if info is None else info
    if t < 0:
        raise DomainError("time must be nonnegative")
    if t == 0:
        info["method"] = method
        return np.where(grid.inside, u, np.nan)
    if method == "kernel":
        profile = profile or default_profile(grid, spec)
        out = _kernel_upper(grid, spec, u, t, profile, info)
        if out is not None:
            info["method"] = "kernel"
            return out
    elif method != "stepping":
        raise DomainError(f"unknown flow method {method!r}")
    n, dt = _steps_for(t, delta, grid.h)
    tr = upper_trace(grid, spec, u, dt, n, reach, profile)
    info.update({"method": "stepping", "delta": dt, "steps": n, "reach": tr.reach})
    return tr.slices[-1]


def t_lower(grid, spec, u, t, method="stepping", delta=None, reach=None, profile=None, info=None):
    """T_t u = -(T^t of -u under the reflected Hamiltonian)."""
    u = _finite_u(grid, u)
    return -t_upper(grid, reflect(spec), -u, t, method, delta, reach, profile, info)


def t_lower_direct(grid, spec, u, t, delta=None, reach=None, profile=None):
    """T_t u from the lower one-step operator (no reflection)."""
    u = _finite_u(grid, u)
    if t == 0:
        return np.where(grid.inside, u, np.nan)
    n, dt = _steps_for(t, delta, grid.h)
    return lower_trace_direct(grid, spec, u, dt, n, reach, profile).slices[-1]


def semigroup_check(grid, spec, u, t, s, method="kernel", delta=None, reach=None,
                    profile=None) -> dict:
    """max |T^{t+s} u - T^t(T^s u)| over inside nodes, with the grid tolerance K h."""
    u = _finite_u(grid, u)
    if s == 0 or t == 0:
        return {"residual": 0.0, "method": method, "grid_tolerance": 0.0}
    if method == "stepping":
        dt = delta or min(t, s) / max(1, int(round(min(t, s) / (DEFAULT_STEP_CELLS * grid.h))))
        R = reach or flow_reach(grid, spec, u, dt, profile)
        n_t, n_s = int(round(t / dt)), int(round(s / dt))
        if not (np.isclose(n_t * dt, t) and np.isclose(n_s * dt, s)):
            raise DomainError("t and s must be multiples of the step")
        both = upper_trace(grid, spec, u, dt, n_t + n_s, R).slices[-1]
        inner = upper_trace(grid, spec, u, dt, n_s, R).slices[-1]
        comp = upper_trace(grid, spec, inner, dt, n_t, R).slices[-1]
        info = {"delta": dt, "reach": R}
    else:
        profile = profile or default_profile(grid, spec)
        i1, i2, i3 = {}, {}, {}
        both = t_upper(grid, spec, u, t + s, "kernel", profile=profile, info=i1)
        inner = t_upper(grid, spec, u, s, "kernel", profile=profile, info=i2)
        comp = t_upper(grid, spec, inner, t, "kernel", profile=profile, info=i3)
        info = {"runs": [i1, i2, i3]}
    diff = np.abs(both - comp)[grid.inside]
    K = lipschitz_bound(grid, u)
    return {"residual": float(diff.max()), "method": method, "grid_tolerance": K * grid.h,
            "info": info}


# -- slopes and energies ----------------------------------------------------------

def slope_fields(grid: GridDomain, spec: HamiltonianSpec, u, probe_times,
                 reach=None, profile=None) -> SlopeField:
    """Difference quotients (T^s u - u)/s and (u - T_s u)/s over probe times.

    Each probe uses a single lattice step of length s.
    """
    u = _finite_u(grid, u)
    probes = np.asarray(probe_times, dtype=float)
    if probes.size == 0 or np.any(probes <= 0):
        raise DomainError("probe times must be positive")
    profile = profile or default_profile(grid, spec)
    qp, qm = [], []
    used = np.zeros(grid.shape)
    rspec = reflect(spec)
    for s in probes:
        R = reach or flow_reach(grid, spec, u, s, profile)
        op_u = step_operator(grid, spec, s, R)
        op_l = step_operator(grid, rspec, s, R)
        up, ku = op_u.upper(u, argmax=True)
        lo, kl = op_l.upper(-u, argmax=True)
        lo = -lo
        used = np.maximum(used, np.hypot(*op_u.offsets[ku].transpose(2, 0, 1)))
        used = np.maximum(used, np.hypot(*op_l.offsets[kl].transpose(2, 0, 1)))
        qp.append((up - u) / s)
        qm.append((u - lo) / s)
    qp, qm = np.stack(qp), np.stack(qm)
    order = np.argsort(probes)
    smallest = order[0]
    mono_p = np.all(np.diff(qp[order], axis=0) >= -1e-12, axis=0)
    mono_m = np.all(np.diff(qm[order], axis=0) >= -1e-12, axis=0)
    low = grid.inside & (grid.dist_to_exterior <= (used + 1.0) * grid.h)
    return SlopeField(qp.max(0), qm.max(0), probes, qp, qm, qp[smallest], qm[smallest],
                      mono_p & grid.inside, mono_m & grid.inside, low)


def discrete_gradient(grid: GridDomain, u) -> np.ndarray:
    """Central differences, one-sided where a neighbour is outside; (ny, nx, 2)."""
    u = np.asarray(u, dtype=float)
    h = grid.h
    ins = grid.inside
    g = np.zeros(u.shape + (2,))
    for axis, comp in ((1, 0), (0, 1)):
        fwd_ok = np.zeros_like(ins)
        bwd_ok = np.zeros_like(ins)
        fwd = np.zeros_like(u)
        bwd = np.zeros_like(u)
        sl_a = [slice(None)] * 2
        sl_b = [slice(None)] * 2
        sl_a[axis] = slice(None, -1)
        sl_b[axis] = slice(1, None)
        sl_a, sl_b = tuple(sl_a), tuple(sl_b)
        fwd_ok[sl_a] = ins[sl_a] & ins[sl_b]
        bwd_ok[sl_b] = ins[sl_a] & ins[sl_b]
        fwd[sl_a] = np.where(fwd_ok[sl_a], u[sl_b], 0.0)
        bwd[sl_b] = np.where(bwd_ok[sl_b], u[sl_a], 0.0)
        uc = np.where(ins, u, 0.0)
        central = (fwd - bwd) / (2 * h)
        g[..., comp] = np.where(fwd_ok & bwd_ok, central,
                                np.where(fwd_ok, (fwd - uc) / h,
                                         np.where(bwd_ok, (uc - bwd) / h, 0.0)))
    return g


def discrete_energy(grid: GridDomain, spec: HamiltonianSpec, u, V=None) -> float:
    """max over V of H(x, Du(x)) with finite-difference gradients."""
    V = grid.inside if V is None else (np.asarray(V, dtype=bool) & grid.inside)
    if not V.any():
        raise DomainError("energy subdomain is empty")
    g = discrete_gradient(grid, u)
    return float(np.max(eval_h(spec, grid.coords[V], g[V])))
