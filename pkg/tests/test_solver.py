import numpy as np
import pytest

from absmin import hamiltonian as hm
from absmin import solver as so
from absmin import verify as vf
from absmin.errors import DataIncompatibilityError, DomainError
from absmin.geometry import build_grid

BOX = {"type": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]}
QUAD = hm.quadratic_isotropic()
G = build_grid(BOX, 1 / 16, 4)
X = G.coords


def solve(g, **kw):
    kw.setdefault("eps", 1e-11)
    kw.setdefault("max_iters", 20000)
    return so.solve_dirichlet(G, QUAD, np.where(G.inside, g, np.nan), **kw)


@pytest.fixture(scope="module")
def saddle():
    g = 0.3 * ((X[..., 0] - 0.5) ** 2 - (X[..., 1] - 0.5) ** 2)
    return g, solve(g)


def test_constant_data_is_a_fixed_point():
    res = solve(np.full(G.shape, 1.5))
    assert res.converged and res.iterations == 1
    np.testing.assert_array_equal(res.u[G.inside], 1.5)


def test_linear_data_reproduces_the_plane():
    g = X @ np.array([1.0, 0.5]) - 0.2
    res = solve(g)
    assert res.converged
    err = np.max(np.abs(res.u - g)[G.inside]) / np.ptp(g[G.inside])
    assert err < 0.02
    # the smallest admissible level is about |e|^2 = 1.25 (boundary pairs see the 4-stencil metric)
    assert 1.25 <= res.level <= 1.6


def test_solution_respects_data_range_and_stationarity(saddle):
    g, res = saddle
    assert res.converged
    gb = g[G.boundary]
    assert gb.min() - 1e-12 <= np.min(res.u[G.inside]) and np.max(res.u[G.inside]) <= gb.max() + 1e-12
    np.testing.assert_array_equal(res.u[G.boundary], gb)
    assert so.stationarity_residual(G, QUAD, res.u, res.delta, res.reach) < 1e-9


def test_ordered_and_shifted_data(saddle):
    g, res = saddle
    shifted = solve(g + 0.7)
    np.testing.assert_allclose(shifted.u[G.inside], res.u[G.inside] + 0.7, atol=1e-8)
    bumped = solve(g + 0.2 * np.exp(-20 * ((X[..., 0] - 1) ** 2 + (X[..., 1] - 0.5) ** 2)),
                   delta=res.delta)
    assert np.all(bumped.u[G.inside] >= res.u[G.inside] - 1e-8)


def test_solver_output_passes_checks(saddle):
    _, res = saddle
    checks = so.attach_checks(G, QUAD, res)
    # at h = 1/16 no node clears the n * reach band, so convexity is recorded as skipped
    assert "empty" in checks["convexity"]["skipped"] and not checks["convexity"]["passed"]
    assert checks["cica"]["passed"]
    assert checks["stationarity"] < 1e-9
    assert res.checks is checks


def test_incompatible_data_raises():
    g = np.where(G.inside, 50.0 * X[..., 0], np.nan)
    with pytest.raises(DataIncompatibilityError):
        so.cone_extension(G, QUAD, g, levels=[1e-3, 1e-2, 1.0])
    with pytest.raises(DomainError):
        so.solve_dirichlet(G, QUAD, np.full(G.shape, np.nan))


def test_cone_extension_is_below_data_and_admissible():
    g = np.where(G.inside, np.sin(3 * X[..., 0]) + X[..., 1], np.nan)
    u0, lam = so.cone_extension(G, QUAD, g)
    np.testing.assert_array_equal(u0[G.boundary], g[G.boundary])
    assert lam > 0
    assert np.all(np.isfinite(u0[G.inside]))


# -- patching ---------------------------------------------------------------------------

def test_patch_is_noop_below_the_smallest_slope():
    u = np.where(G.inside, X @ np.array([1.0, 0.5]), np.nan)
    # S+u = 1.25 in the continuum; offsets clipped by the small box lower the estimate to about 0.84
    P = so.patch(G, QUAD, u, 0.5)
    assert P.diagnostics["V_size"] == 0
    assert P.noop and not P.V.any()
    np.testing.assert_array_equal(P.u_sigma, u)
    with pytest.raises(DomainError):
        so.patch(G, QUAD, u, 0.0)


def test_patch_family_properties():
    G32 = build_grid(BOX, 1 / 32, 4)
    u = np.where(G32.inside, np.hypot(G32.coords[..., 0] + 0.3, G32.coords[..., 1] + 0.2), np.nan)
    u = u + 0.3 * np.where(G32.inside, np.exp(-30 * np.sum((G32.coords - 0.5) ** 2, -1)), np.nan)
    probes = so.default_probe_times(G32)
    patches = [so.patch(G32, QUAD, u, s, probe_times=probes) for s in (0.3, 0.6, 1.0)]
    assert any(not P.noop for P in patches)
    for P in patches:
        assert np.all(P.u_sigma[G32.inside] <= u[G32.inside])
    reps = vf.check_patch_family(G32, QUAD, u, patches, probes)
    assert [r.name for r in reps] == ["patch_below", "patch_boundary", "patch_slope", "patch_monotone"]
    assert all(r.passed for r in reps), [(r.name, r.worst_violation) for r in reps]


def test_slope_consistent_weights_bound_the_support():
    """Each weight s (L(o h / s) + sigma) is at least L_sigma(o h) = sqrt(sigma) |o h|."""
    sigma = 0.5
    w = so.slope_consistent_weights(G, QUAD, sigma, [G.h, 2 * G.h, 4 * G.h])
    length = G.edges[4]
    assert np.all(w >= np.sqrt(sigma) * length * (1 - 1e-12))


# -- the non-uniqueness example -----------------------------------------------------------

def test_counterexample_true_gap():
    """u - v = r - 1/2 - (2/5)(r^2 - 1/4) peaks at r = 5/4 with value 9/40."""
    ce = so.counterexample_scenario(0.05)
    assert ce.boundary_residual < 1e-12
    assert ce.energy_u < 1e-2 and ce.energy_v < 1e-2
    assert ce.interior_gap == pytest.approx(0.225, abs=1e-3)
    assert ce.gap_radius == pytest.approx(1.25, abs=0.05)
    r = np.hypot(*ce.grid.coords.transpose(2, 0, 1))
    exact = (r - 0.5) - 0.4 * (r ** 2 - 0.25)
    inter = ce.grid.interior
    np.testing.assert_allclose((ce.u - ce.v)[inter], exact[inter], atol=1e-12)


def test_counterexample_rejects_coarse_grids():
    with pytest.raises(DomainError):
        so.counterexample_scenario(0.1)
