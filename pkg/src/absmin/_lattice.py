"""One-step Lax–Oleinik operators on a lattice with a disk of offsets.

For a time step ``delta`` and lattice offsets ``o`` with ``|o| <= reach``
(the zero offset included), the upper and lower steps are

    up(u)(x)  = max_o [u(x + o h) - delta * L(x + o h / 2,  o h / delta)]
    low(u)(x) = min_o [u(x + o h) + delta * L(x + o h / 2, -o h / delta)]

i.e. one piecewise-linear curve segment of duration ``delta`` with the
Lagrangian sampled at the segment midpoint.  The zero offset costs
``delta * L(x, 0) = 0`` so ``low(u) <= u <= up(u)`` holds exactly.
"""
from __future__ import annotations

import logging

import numpy as np

from .geometry import GridDomain, disk_offsets
from .hamiltonian import HamiltonianSpec, legendre

log = logging.getLogger(__name__)

# cache cost arrays when the total size stays below this many floats
_CACHE_LIMIT = 40_000_000


class StepOperator:
    """Upper/lower one-step operators for fixed (grid, spec, delta, reach)."""

    def __init__(self, grid: GridDomain, spec: HamiltonianSpec, delta: float, reach: float):
        if not delta > 0:
            raise ValueError("time step must be positive")
        self.grid = grid
        self.spec = spec
        self.delta = float(delta)
        self.reach = float(reach)
        offsets = disk_offsets(max(reach, 1.0), include_zero=True)
        valid = [grid.shift_valid(int(di), int(dj)) for di, dj in offsets]
        keep = [k for k, v in enumerate(valid) if v.any()]
        self.offsets = offsets[keep]
        self._valid = [valid[k] for k in keep]
        self.pad = int(np.abs(self.offsets).max())
        self._cache = {}
        n = len(self.offsets) * grid.n_nodes
        self._cache_ok = spec.x_independent or n <= _CACHE_LIMIT

    @property
    def speed_cap(self) -> float:
        """Largest representable curve speed per step."""
        return self.reach * self.grid.h / self.delta

    def _costs(self, k: int, sign: int):
        """delta * L(midpoint, sign * o h / delta) for offset k, +inf where invalid."""
        key = (k, sign)
        if key in self._cache:
            return self._cache[key]
        di, dj = self.offsets[k]
        valid = self._valid[k]
        h, dt = self.grid.h, self.delta
        if di == 0 and dj == 0:
            c = np.where(valid, 0.0, np.inf)
        elif self.spec.x_independent:
            q = sign * np.array([di, dj], dtype=float) * h / dt
            lv = float(dt * legendre(self.spec, np.zeros(2), q))
            c = np.where(valid, lv, np.inf)
        else:
            c = np.full(self.grid.shape, np.inf)
            if valid.any():
                x = self.grid.coords[valid] + 0.5 * h * np.array([di, dj], dtype=float)
                q = np.broadcast_to(sign * np.array([di, dj], dtype=float) * h / dt, x.shape)
                c[valid] = dt * legendre(self.spec, x, q)
        if self._cache_ok:
            self._cache[key] = c
        return c

    def _shifted(self, padded, k):
        di, dj = self.offsets[k]
        P = self.pad
        ny, nx = self.grid.shape
        return padded[P + dj:P + dj + ny, P + di:P + di + nx]

    def _padded(self, u):
        P = self.pad
        out = np.zeros((u.shape[0] + 2 * P, u.shape[1] + 2 * P))
        out[P:-P or None, P:-P or None] = np.where(self.grid.inside, u, 0.0)
        return out

    def upper(self, u: np.ndarray, argmax: bool = False):
        """One upper step; NaN outside the domain."""
        pu = self._padded(u)
        best = np.full(self.grid.shape, -np.inf)
        arg = np.zeros(self.grid.shape, dtype=int)
        for k in range(len(self.offsets)):
            cand = self._shifted(pu, k) - self._costs(k, +1)
            better = cand > best
            best = np.where(better, cand, best)
            if argmax:
                arg = np.where(better, k, arg)
        best = np.where(self.grid.inside, best, np.nan)
        return (best, arg) if argmax else best

    def lower(self, u: np.ndarray, argmin: bool = False):
        """One lower step; NaN outside the domain.  ``u`` may contain +inf."""
        pu = self._padded(u)
        best = np.full(self.grid.shape, np.inf)
        arg = np.zeros(self.grid.shape, dtype=int)
        for k in range(len(self.offsets)):
            cand = self._shifted(pu, k) + self._costs(k, -1)
            better = cand < best
            best = np.where(better, cand, best)
            if argmin:
                arg = np.where(better, k, arg)
        best = np.where(self.grid.inside, best, np.nan)
        return (best, arg) if argmin else best


_OPERATORS: dict = {}


def step_operator(grid, spec, delta, reach) -> StepOperator:
    """Memoised :class:`StepOperator` (specs and grids are immutable)."""
    key = (id(grid), id(spec), float(delta), float(reach))
    op = _OPERATORS.get(key)
    if op is None or op.grid is not grid or op.spec is not spec:
        if len(_OPERATORS) > 32:
            _OPERATORS.clear()
        op = StepOperator(grid, spec, delta, reach)
        _OPERATORS[key] = op
    return op
