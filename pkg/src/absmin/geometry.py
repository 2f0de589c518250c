"""Lattice domains, directed intrinsic distances, geodesics and cones.

A :class:`GridDomain` is a masked rectangular lattice.  Nodes sit at
``origin + (i*h, j*h)`` and every per-node array is indexed ``[j, i]``
(row = second coordinate).  Graph distances use a directed stencil graph
whose edge ``x -> x + o*h`` carries the weight ``L_lam(midpoint, o*h)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from math import gcd
from typing import Callable, Optional

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from .errors import ConfigError, DomainError, ReachabilityError
from .hamiltonian import HamiltonianSpec, sublevel_support

log = logging.getLogger(__name__)

NO_PARENT = -9999


# -- stencils -----------------------------------------------------------------

def disk_offsets(radius: float, primitive: bool = False, include_zero: bool = False) -> np.ndarray:
    """Integer lattice offsets (di, dj) with 0 < |o| <= radius.

    With ``primitive=True`` only offsets with gcd(di, dj) == 1 are kept,
    which is what a shortest-path stencil needs (longer collinear moves
    are sums of shorter ones).
    """
    R = int(np.floor(radius))
    out = []
    for dj in range(-R, R + 1):
        for di in range(-R, R + 1):
            if di == 0 and dj == 0:
                if include_zero:
                    out.append((0, 0))
                continue
            if di * di + dj * dj > radius * radius + 1e-9:
                continue
            if primitive and gcd(abs(di), abs(dj)) != 1:
                continue
            out.append((di, dj))
    return np.array(out, dtype=int).reshape(-1, 2)


def stencil_offsets(kind="16") -> np.ndarray:
    """Named neighbour stencils '4', '8', '16' (strings), or a numeric radius
    for the primitive offsets of a disk."""
    if isinstance(kind, str) and kind in ("4", "8", "16"):
        if kind == "4":
            return np.array([(1, 0), (0, 1), (-1, 0), (0, -1)])
        return disk_offsets(np.sqrt(2.0) if kind == "8" else np.sqrt(5.0), primitive=True)
    try:
        r = float(kind)
    except (TypeError, ValueError):
        raise ConfigError(f"unknown stencil {kind!r}") from None
    return disk_offsets(r, primitive=True)


# -- inside predicates ------------------------------------------------------------

def _polygon_contains(verts: np.ndarray, pts: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Closed point-in-polygon test (edges count as inside)."""
    x, y = pts[..., 0], pts[..., 1]
    inside = np.zeros(x.shape, dtype=bool)
    on_edge = np.zeros(x.shape, dtype=bool)
    n = len(verts)
    for k in range(n):
        (x1, y1), (x2, y2) = verts[k], verts[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
        dx, dy = x2 - x1, y2 - y1
        seg2 = dx * dx + dy * dy
        tt = np.clip(((x - x1) * dx + (y - y1) * dy) / seg2, 0.0, 1.0)
        dist = np.hypot(x - (x1 + tt * dx), y - (y1 + tt * dy))
        on_edge |= dist <= eps
    return inside | on_edge


def read_pgm(path) -> np.ndarray:
    """Read a PGM bitmap as a boolean mask, indexed [j, i] with j upward."""
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr[::-1] > 0


def write_pgm(path, values: np.ndarray, mask: Optional[np.ndarray] = None):
    """Write a field as an 8-bit PGM heatmap (rows flipped so y points up)."""
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v) if mask is None else (mask & np.isfinite(v))
    img = np.zeros(v.shape, dtype=np.uint8)
    if ok.any():
        lo, hi = v[ok].min(), v[ok].max()
        scale = 254.0 / (hi - lo) if hi > lo else 0.0
        img[ok] = (1 + np.round((v[ok] - lo) * scale)).astype(np.uint8)
    img = img[::-1]
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def domain_predicate(domain_spec: dict) -> tuple[Callable, tuple, bool]:
    """(contains(points), bounding box, convex flag) for a domain spec."""
    kind = domain_spec.get("type")
    if kind == "box":
        lo = np.asarray(domain_spec.get("lo", [0.0, 0.0]), dtype=float)
        hi = np.asarray(domain_spec.get("hi", [1.0, 1.0]), dtype=float)
        if np.any(hi <= lo):
            raise ConfigError("box needs hi > lo")
        eps = 1e-9 * float(np.max(hi - lo))

        def contains(p):
            return np.all((p >= lo - eps) & (p <= hi + eps), axis=-1)

        return contains, (lo, hi), True
    if kind == "annulus":
        c = np.asarray(domain_spec.get("center", [0.0, 0.0]), dtype=float)
        r0, r1 = float(domain_spec["r_in"]), float(domain_spec["r_out"])
        if not 0 <= r0 < r1:
            raise ConfigError("annulus needs 0 <= r_in < r_out")

        def contains(p):
            r = np.hypot(p[..., 0] - c[0], p[..., 1] - c[1])
            return (r > r0) & (r < r1)

        lo = np.asarray(domain_spec.get("lo", c - r1), dtype=float)
        hi = np.asarray(domain_spec.get("hi", c + r1), dtype=float)
        return contains, (lo, hi), False
    if kind == "polygon":
        verts = np.asarray(domain_spec["vertices"], dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 3:
            raise ConfigError("polygon needs at least three vertices")
        return (lambda p: _polygon_contains(verts, p)), (verts.min(0), verts.max(0)), False
    if kind == "mask":
        raise ConfigError("mask domains are built by build_grid directly")
    raise ConfigError(f"unknown domain type {kind!r}")


# -- grid -------------------------------------------------------------------------

@dataclass(eq=False)
class GridDomain:
    """Masked lattice with a directed neighbour stencil."""

    origin: np.ndarray
    h: float
    inside: np.ndarray
    offsets: np.ndarray
    domain_spec: dict = field(default_factory=dict)
    contains: Optional[Callable] = None
    convex: bool = False

    @property
    def shape(self):
        return self.inside.shape

    @property
    def n_nodes(self) -> int:
        return self.inside.size

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (ny, nx, 2)."""
        ny, nx = self.shape
        X = self.origin[0] + self.h * np.arange(nx)
        Y = self.origin[1] + self.h * np.arange(ny)
        XX, YY = np.meshgrid(X, Y)
        return np.stack([XX, YY], axis=-1)

    @property
    def bbox(self):
        ny, nx = self.shape
        return self.origin, self.origin + self.h * np.array([nx - 1, ny - 1])

    @property
    def diameter(self) -> float:
        lo, hi = self.bbox
        return float(np.hypot(*(hi - lo)))

    def flat(self, j, i):
        return np.asarray(j) * self.shape[1] + np.asarray(i)

    def unflat(self, k):
        return np.divmod(np.asarray(k), self.shape[1])

    def node_xy(self, k) -> np.ndarray:
        j, i = self.unflat(k)
        return self.coords[j, i]

    def nearest_node(self, point) -> int:
        """Flat index of the inside node closest to ``point``."""
        p = np.asarray(point, dtype=float)
        d2 = ((self.coords - p) ** 2).sum(-1)
        d2[~self.inside] = np.inf
        return int(np.argmin(d2))

    def contains_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.contains is not None:
            return self.contains(pts)
        ij = np.rint((pts - self.origin) / self.h).astype(int)
        ny, nx = self.shape
        ok = (ij[..., 0] >= 0) & (ij[..., 0] < nx) & (ij[..., 1] >= 0) & (ij[..., 1] < ny)
        out = np.zeros(pts.shape[:-1], dtype=bool)
        out[ok] = self.inside[ij[..., 1][ok], ij[..., 0][ok]]
        return out

    def shift_valid(self, di: int, dj: int) -> np.ndarray:
        """Mask of nodes x with x and x + (di, dj) inside and the segment inside."""
        ny, nx = self.shape
        ok = np.zeros(self.shape, dtype=bool)
        if abs(di) >= nx or abs(dj) >= ny:
            return ok
        js = slice(max(0, -dj), min(ny, ny - dj))
        is_ = slice(max(0, -di), min(nx, nx - di))
        jt = slice(max(0, dj), min(ny, ny + dj))
        it = slice(max(0, di), min(nx, nx + di))
        ok[js, is_] = self.inside[js, is_] & self.inside[jt, it]
        if not self.convex and (abs(di) + abs(dj)) > 1 and ok.any():
            n_s = int(np.ceil(2 * np.hypot(di, dj))) + 1
            j, i = np.nonzero(ok)
            base = self.coords[j, i]
            step = self.h * np.array([di, dj], dtype=float)
            good = np.ones(len(j), dtype=bool)
            for f in np.arange(1, n_s) / n_s:
                good &= self.contains_points(base + f * step)
            ok[j[~good], i[~good]] = False
        return ok

    @cached_property
    def edges(self):
        """Directed stencil edges: (src, dst, offset (m,2), midpoints (m,2), length)."""
        src, dst, off = [], [], []
        for di, dj in self.offsets:
            ok = self.shift_valid(int(di), int(dj))
            j, i = np.nonzero(ok)
            src.append(self.flat(j, i))
            dst.append(self.flat(j + dj, i + di))
            off.append(np.tile([di, dj], (len(j), 1)))
        src = np.concatenate(src) if src else np.zeros(0, int)
        dst = np.concatenate(dst) if dst else np.zeros(0, int)
        off = np.concatenate(off) if off else np.zeros((0, 2), int)
        # canonical ordering so that transposes and reflections line up
        order = np.lexsort((dst, src))
        src, dst, off = src[order], dst[order], off[order]
        xy = self.coords.reshape(-1, 2)
        mid = 0.5 * (xy[src] + xy[dst])
        length = self.h * np.hypot(off[:, 0], off[:, 1])
        return src, dst, off, mid, length

    @cached_property
    def boundary(self) -> np.ndarray:
        """Inside nodes with at least one stencil neighbour outside."""
        ny, nx = self.shape
        bd = np.zeros(self.shape, dtype=bool)
        R = int(np.abs(self.offsets).max())
        pad = np.zeros((ny + 2 * R, nx + 2 * R), dtype=bool)
        pad[R:R + ny, R:R + nx] = self.inside
        for di, dj in self.offsets:
            bd |= ~pad[R + dj:R + dj + ny, R + di:R + di + nx]
        return bd & self.inside

    @property
    def interior(self) -> np.ndarray:
        return self.inside & ~self.boundary

    @cached_property
    def dist_to_exterior(self) -> np.ndarray:
        """Euclidean distance (length units) from each node to the nearest outside node."""
        pad = np.zeros((self.shape[0] + 2, self.shape[1] + 2), dtype=bool)
        pad[1:-1, 1:-1] = self.inside
        return ndimage.distance_transform_edt(pad)[1:-1, 1:-1] * self.h

    def inner(self, r: float) -> np.ndarray:
        """Inside nodes at distance >= r from the exterior (the set U_r)."""
        return self.inside & (self.dist_to_exterior >= r - 1e-12)

    def graph(self, weights: np.ndarray) -> sparse.csr_matrix:
        src, dst, *_ = self.edges
        n = self.n_nodes
        return sparse.csr_matrix((weights, (src, dst)), shape=(n, n))


def build_grid(domain_spec: dict, h: float, stencil="16") -> GridDomain:
    """Lattice over a box / annulus / polygon / PGM mask domain."""
    if not h > 0:
        raise ConfigError("grid spacing must be positive")
    offsets = stencil_offsets(stencil)
    if domain_spec.get("type") == "mask":
        inside = read_pgm(domain_spec["path"])
        origin = np.asarray(domain_spec.get("origin", [0.0, 0.0]), dtype=float)
        grid = GridDomain(origin, float(h), inside, offsets, dict(domain_spec), None, False)
    else:
        contains, (lo, hi), convex = domain_predicate(domain_spec)
        n = np.floor((np.asarray(hi) - lo) / h + 1e-9).astype(int) + 1
        X = lo[0] + h * np.arange(n[0])
        Y = lo[1] + h * np.arange(n[1])
        XX, YY = np.meshgrid(X, Y)
        inside = contains(np.stack([XX, YY], axis=-1))
        grid = GridDomain(np.asarray(lo, dtype=float), float(h), inside, offsets,
                          dict(domain_spec), contains, convex)
    if not grid.inside.any():
        raise ConfigError("domain has empty interior at this resolution")
    # drop isolated nodes
    src, _, *_ = grid.edges
    has_edge = np.zeros(grid.n_nodes, dtype=bool)
    has_edge[src] = True
    isolated = grid.inside & ~has_edge.reshape(grid.shape)
    if isolated.any():
        log.info("dropping %d isolated nodes", int(isolated.sum()))
        inside = grid.inside & ~isolated
        grid = GridDomain(grid.origin, grid.h, inside, offsets, grid.domain_spec,
                          grid.contains, grid.convex)
    if not grid.inside.any():
        raise ConfigError("domain has empty interior at this resolution")
    return grid


def with_stencil(grid: GridDomain, stencil) -> GridDomain:
    """Same mask and spacing, different neighbour stencil."""
    return GridDomain(grid.origin, grid.h, grid.inside, stencil_offsets(stencil),
                      grid.domain_spec, grid.contains, grid.convex)


# -- distance fields --------------------------------------------------------------

@dataclass(eq=False)
class DistanceField:
    """Directed graph distances from (or to) a source node."""

    grid: GridDomain
    source: int
    direction: str
    lam: Optional[float]
    values: np.ndarray
    parent: np.ndarray
    n_clamped: int = 0
    _weights: Optional[sparse.csr_matrix] = field(default=None, repr=False)

    def at(self, node) -> float:
        j, i = self.grid.unflat(node)
        return float(self.values[j, i])


@dataclass
class GeodesicPath:
    """Graph geodesic in travel order and its accumulated length."""

    nodes: np.ndarray
    length: float
    points: np.ndarray


def _check_source(grid, source):
    source = int(source)
    if not 0 <= source < grid.n_nodes:
        raise DomainError(f"source index {source} outside the lattice")
    j, i = grid.unflat(source)
    if not grid.inside[j, i]:
        raise DomainError("source node lies outside the domain")
    return source


def edge_weights(grid: GridDomain, spec: HamiltonianSpec, lam: float):
    """L_lam(midpoint, displacement) on every stencil edge; clamped at 0."""
    src, dst, off, mid, length = grid.edges
    w = np.asarray(sublevel_support(spec, mid, lam, off * grid.h), dtype=float)
    bad = ~(w > 0)
    n_clamped = int(bad.sum())
    if n_clamped:
        log.warning("%d edge weights were non-positive and clamped to 0", n_clamped)
        w = np.where(bad, 0.0, w)
    return w, n_clamped


def _run(grid, W, source, direction):
    if direction == "from":
        G = W
    elif direction == "to":
        G = W.T.tocsr()
    else:
        raise ConfigError(f"direction must be 'from' or 'to', got {direction!r}")
    dist, pred = csgraph.dijkstra(G, directed=True, indices=source, return_predecessors=True)
    return dist.reshape(grid.shape), pred.reshape(grid.shape)


def distance_du(grid: GridDomain, source) -> DistanceField:
    """Euclidean shortest-path distance inside the domain."""
    source = _check_source(grid, source)
    W = grid.graph(grid.edges[4])
    vals, par = _run(grid, W, source, "from")
    return DistanceField(grid, source, "from", None, vals, par, 0, W)


def distance_dlambda(grid: GridDomain, spec: HamiltonianSpec, lam: float, source,
                     direction: str = "from") -> DistanceField:
    """Directed intrinsic distance d_lam(source, .) or d_lam(., source)."""
    if not lam > 0:
        raise DomainError("level must be positive")
    source = _check_source(grid, source)
    w, n_clamped = edge_weights(grid, spec, lam)
    W = grid.graph(w)
    vals, par = _run(grid, W, source, direction)
    return DistanceField(grid, source, direction, float(lam), vals, par, n_clamped, W)


def distance_matrix(grid: GridDomain, spec: Optional[HamiltonianSpec], lam, sources,
                    direction: str = "from") -> np.ndarray:
    """Distances for several sources at once, shape (len(sources), ny, nx)."""
    sources = [_check_source(grid, s) for s in np.atleast_1d(sources)]
    w = grid.edges[4] if spec is None else edge_weights(grid, spec, lam)[0]
    G = grid.graph(w)
    if direction == "to":
        G = G.T.tocsr()
    d = csgraph.dijkstra(G, directed=True, indices=sources)
    return d.reshape((len(sources),) + grid.shape)


def cone_function(grid, spec, lam, vertex, direction="from", c=0.0) -> np.ndarray:
    """Intrinsic cone d_lam(vertex, .) + c or d_lam(., vertex) + c."""
    return distance_dlambda(grid, spec, lam, vertex, direction).values + c


def extract_geodesic(fld: DistanceField, target) -> GeodesicPath:
    """Follow back-pointers to the source.

    Nodes are returned in travel order (source -> target for 'from' fields,
    target -> source for 'to' fields).  The length is accumulated from the
    source end in the same order the shortest-path search added the edges,
    so it reproduces the stored field value exactly.
    """
    grid = fld.grid
    target = int(target)
    j, i = grid.unflat(target)
    if not np.isfinite(fld.values[j, i]):
        raise ReachabilityError("target is not reachable from the source")
    par = fld.parent.ravel()
    chain = [target]
    while chain[-1] != fld.source:
        p = int(par[chain[-1]])
        if p < 0:
            raise ReachabilityError("broken parent chain")
        chain.append(p)
    chain = chain[::-1]  # source first
    W = fld._weights
    length = 0.0
    for a, b in zip(chain[:-1], chain[1:]):
        length += W[a, b] if fld.direction == "from" else W[b, a]
    nodes = np.array(chain if fld.direction == "from" else chain[::-1], dtype=int)
    return GeodesicPath(nodes, float(length), grid.node_xy(nodes))


def field_from_nodes(grid: GridDomain, fn) -> np.ndarray:
    """Evaluate fn(coords) on inside nodes; NaN outside."""
    out = np.full(grid.shape, np.nan)
    out[grid.inside] = fn(grid.coords[grid.inside])
    return out
