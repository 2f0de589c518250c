"""Action functions L_t(x0, .) on a time grid and the fronts E^t_lam.

The action is computed by dynamic programming over piecewise-linear
curves with lattice breakpoints (see :mod:`absmin._lattice`).  Two
drivers are provided:

* :func:`action_dp` -- one run with a fixed step, slices at ``k * delta``;
* :func:`action_slices` -- an independent coarse-step run per requested
  time, followed by a running minimum over time.  Each independent run
  is an upper bound for the continuum action, and the action is
  nonincreasing in t, so the running minimum is a tighter upper bound.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._lattice import step_operator
from .errors import DomainError, NotApplicableError
from .geometry import DistanceField, GridDomain
from .hamiltonian import CoercivityProfile, HamiltonianSpec, legendre

log = logging.getLogger(__name__)

MAX_AUTO_REACH = 24


@dataclass(eq=False)
class ActionField:
    """Slices L_{t_k}(source, .) (``+inf`` where unreached, NaN outside)."""

    grid: GridDomain
    source: int
    times: np.ndarray
    slices: np.ndarray
    delta: Optional[float] = None
    reach: Optional[float] = None
    notes: list = field(default_factory=list)

    def slice_at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[k], t, rtol=1e-9, atol=1e-12):
            raise DomainError(f"no slice at t={t}")
        return self.slices[k]


@dataclass(eq=False)
class FrontFamily:
    """Approximate fronts E^{t_k}_lam(source) as boolean node masks."""

    lam: float
    times: np.ndarray
    fronts: np.ndarray
    tau: np.ndarray
    residual: np.ndarray
    multiplicity: np.ndarray
    containment: list = field(default_factory=list)

    def nodes(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fronts[k])


def _initial_slice(grid, source):
    s0 = np.full(grid.shape, np.inf)
    s0[~grid.inside] = np.nan
    j, i = grid.unflat(source)
    if not grid.inside[j, i]:
        raise DomainError("source node lies outside the domain")
    s0[j, i] = 0.0
    return s0


def auto_reach(grid: GridDomain, steps: int) -> int:
    """Enough reach to cross the domain in ``steps`` moves, capped."""
    r = int(np.ceil(grid.diameter / (steps * grid.h))) + 1
    if r > MAX_AUTO_REACH:
        log.info("auto reach %d capped at %d", r, MAX_AUTO_REACH)
        r = MAX_AUTO_REACH
    return r


def action_dp(grid: GridDomain, spec: HamiltonianSpec, source: int, delta: float,
              steps: int, reach: Optional[float] = None) -> ActionField:
    """L_{k delta}(source, .) for k = 0..steps by the lower one-step recursion.

    ``slice_{k+1}(y) = min_z [slice_k(z) + delta L(mid(z, y), (y - z)/delta)]``
    with z ranging over the offset disk of radius ``reach`` around y
    (z = y included).
    """
    if not delta > 0:
        raise DomainError("time step must be positive")
    if steps < 1:
        raise DomainError("need at least one step")
    source = int(source)
    if reach is None:
        reach = auto_reach(grid, steps)
    op = step_operator(grid, spec, delta, reach)
    notes = []
    if op.speed_cap * steps * delta < grid.diameter:
        msg = (f"speed cap {op.speed_cap:.3g} reaches only {op.speed_cap * steps * delta:.3g} "
               f"of domain diameter {grid.diameter:.3g}")
        log.info(msg)
        notes.append(msg)
    if op.speed_cap < 1.0:
        warnings.warn(f"time step {delta:.3g} starves the stencil: speed cap "
                      f"{op.speed_cap:.3g} < 1", RuntimeWarning, stacklevel=2)
    slices = [_initial_slice(grid, source)]
    for _ in range(steps):
        slices.append(op.lower(slices[-1]))
    times = delta * np.arange(steps + 1)
    return ActionField(grid, source, times, np.stack(slices), float(delta), float(reach), notes)


def action_slices(grid: GridDomain, spec: HamiltonianSpec, source: int, times,
                  substeps: int = 4, reach=None, speed: Optional[float] = None,
                  min_step: float = 0.0) -> ActionField:
    """Independent coarse-step action runs per time, then a running minimum.

    For time t the run uses ``substeps`` steps of length t / substeps, or
    fewer when that would make a step shorter than ``min_step`` (short
    steps coarsen the representable velocities, see the module notes).  The
    reach is either given, or sized so a curve of the given ``speed`` (or
    crossing the domain when ``speed`` is None) is representable.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or np.any(times < 0):
        raise DomainError("times must be ascending and nonnegative")
    out = []
    for t in times:
        if t == 0:
            out.append(_initial_slice(grid, source))
            continue
        n = int(np.clip(np.floor(t / min_step), 1, substeps)) if min_step > 0 else substeps
        dt = t / n
        if reach is not None:
            R = reach
        elif speed is not None:
            R = int(np.ceil(speed * dt / grid.h)) + 2
        else:
            R = auto_reach(grid, substeps)
        op = step_operator(grid, spec, dt, R)
        s = _initial_slice(grid, source)
        for _ in range(n):
            s = op.lower(s)
        out.append(s)
    sl = np.stack(out)
    with np.errstate(invalid="ignore"):
        sl = np.fmin.accumulate(sl, axis=0)
    sl[:, ~grid.inside] = np.nan
    return ActionField(grid, int(source), times, sl, None, None,
                       [f"independent slices, {substeps} substeps each"])


def action_hopf_lax(spec: HamiltonianSpec, x, y, t: float, grid: Optional[GridDomain] = None):
    """t L((y - x)/t) for an x-independent Hamiltonian.

    Valid when the segment [x, y] lies in the domain; when a grid is given
    and the segment leaves it, NotApplicableError is raised.
    """
    if not spec.x_independent:
        raise NotApplicableError("the straight-line action formula needs an x-independent H")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if grid is not None and not grid.convex:
        f = np.linspace(0.0, 1.0, 33)
        pts = x[..., None, :] + f[:, None] * (y - x)[..., None, :]
        if not np.all(grid.contains_points(pts)):
            raise NotApplicableError("segment leaves the domain")
    if t < 0:
        raise DomainError("time must be nonnegative")
    if t == 0:
        same = np.all(x == y, axis=-1)
        return np.where(same, 0.0, np.inf)
    return t * legendre(spec, np.zeros(2), (y - x) / t)


def default_tau(lam: float, delta: float, edge_scale: float, h: float) -> float:
    """One time step plus two cells of edge-weight slack."""
    return lam * delta + 2.0 * edge_scale * h


def extract_fronts(action: ActionField, dist: DistanceField, lam: float, tau=None,
                   profile: Optional[CoercivityProfile] = None, slack_cells: int = 1) -> FrontFamily:
    """Nodes where L_t(x0, y) matches d_lam(x0, y) - lam t within tau.

    ``tau`` may be a scalar, an array with one entry per slice, or None for
    :func:`default_tau`.  When a coercivity profile is given, the
    containment of the inner ball {d_lam < lam t} in the union of earlier
    fronts and of that union in the outer ball {d_lam <= a_lam R_lam t} is
    measured per slice (allowing ``slack_cells`` cells of slack).
    """
    grid = action.grid
    if dist.grid is not grid or dist.source != action.source:
        raise DomainError("action and distance fields must share grid and source")
    T = action.times
    if tau is None:
        dt = action.delta if action.delta else float(np.min(np.diff(T))) if len(T) > 1 else 0.0
        scale = float(np.nanmax(np.where(np.isfinite(dist.values), dist.values, np.nan))) / grid.diameter
        tau = default_tau(lam, dt, scale, grid.h)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), T.shape).copy()
    target = dist.values[None] - lam * T[:, None, None]
    with np.errstate(invalid="ignore"):
        res = np.abs(action.slices - target)
    res[:, ~grid.inside] = np.nan
    fronts = np.nan_to_num(res, nan=np.inf) <= tau[:, None, None]
    if T[0] == 0:
        # E^0 = {source}
        fronts[0] = False
        j0, i0 = grid.unflat(action.source)
        fronts[0, j0, i0] = True
    mult = fronts.sum(axis=0)

    contain = []
    if profile is not None:
        a, R = profile.a_at(lam), profile.R_at(lam)
        union = np.zeros(grid.shape, dtype=bool)
        for k, t in enumerate(T):
            inner = grid.inside & (dist.values < lam * t)
            grown = ndimage_dilate(union, slack_cells) & grid.inside
            missing = inner & ~grown
            outer_bound = a * R * t
            excess = float(np.max(dist.values[union] - outer_bound)) if union.any() else -np.inf
            contain.append({
                "t": float(t),
                "inner_nodes": int(inner.sum()),
                "inner_missing": int(missing.sum()),
                "outer_bound": float(outer_bound),
                "outer_excess": excess,
                "outer_slack": float(slack_cells * R * grid.h * np.sqrt(2.0)),
            })
            union |= fronts[k]
    return FrontFamily(float(lam), T.copy(), fronts, tau, res, mult, contain)


def ndimage_dilate(mask: np.ndarray, cells: int) -> np.ndarray:
    """Dilate a boolean mask by ``cells`` lattice steps (8-connectivity)."""
    if cells <= 0:
        return mask.copy()
    from scipy import ndimage

    return ndimage.binary_dilation(mask, structure=np.ones((3, 3), bool), iterations=cells)
