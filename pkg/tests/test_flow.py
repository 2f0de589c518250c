import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absmin import flow as fl
from absmin import hamiltonian as hm
from absmin.errors import DomainError
from absmin.geometry import build_grid

BOX = {"type": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]}
QUAD = hm.quadratic_isotropic()
G32 = build_grid(BOX, 1 / 32, "16")
E = np.array([1.0, 0.5])


def linear(grid, e=E, c=0.0):
    return np.where(grid.inside, grid.coords @ e + c, np.nan)


def smooth_field(grid, coef):
    """A few-parameter smooth function: linear + quadratic + a ripple."""
    x, y = grid.coords[..., 0], grid.coords[..., 1]
    a, b, c, d, e = coef
    return a * x + b * y + c * (x - 0.5) ** 2 + d * (x - 0.3) * (y - 0.6) + 0.2 * e * np.sin(4 * x + 3 * y)


coefs = st.tuples(*[st.floats(-1.5, 1.5)] * 5)


# -- order structure ------------------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(coefs, st.sampled_from([1, 2, 4]))
def test_chain_and_monotone_in_time(coef, cells):
    u = smooth_field(G32, coef)
    spec = hm.riemannian([[1.0, 0.3], [0.3, 0.5]])
    up = fl.upper_trace(G32, spec, u, cells * G32.h, 4).slices
    lo = fl.lower_trace(G32, spec, u, cells * G32.h, 4).slices
    assert np.all(up[1:] >= up[:-1])
    assert np.all(lo[1:] <= lo[:-1])
    assert np.all(lo[-1] <= up[-1])


@settings(max_examples=15, deadline=None)
@given(coefs, st.floats(0.0, 1.0), st.floats(-3.0, 3.0))
def test_order_preserving_and_constant_shift(coef, bump, c):
    u = smooth_field(G32, coef)
    r2 = np.sum((G32.coords - 0.4) ** 2, -1)
    v = u + bump * np.exp(-20 * r2)
    t = 3 * G32.h
    Tu = fl.t_upper(G32, QUAD, u, t, reach=6)
    assert np.all(fl.t_upper(G32, QUAD, v, t, reach=6) >= Tu)
    np.testing.assert_allclose(fl.t_upper(G32, QUAD, u + c, t, reach=6), Tu + c, atol=1e-12)


# -- semigroup and duality ------------------------------------------------------------------

def test_stepping_semigroup_is_exact():
    u = smooth_field(G32, (0.5, -1.0, 1.0, 0.7, 1.0))
    res = fl.semigroup_check(G32, QUAD, u, 4 * G32.h, 2 * G32.h, method="stepping", delta=G32.h)
    assert res["residual"] == 0.0
    with pytest.raises(DomainError):
        fl.semigroup_check(G32, QUAD, u, 1.5 * G32.h, G32.h, method="stepping", delta=G32.h)


def test_kernel_semigroup_within_grid_tolerance():
    u = smooth_field(G32, (0.5, -1.0, 1.0, 0.7, 1.0))
    res = fl.semigroup_check(G32, QUAD, u, 2 * G32.h, G32.h, method="kernel")
    assert res["residual"] <= res["grid_tolerance"]


def test_kernel_matches_stepping_for_x_dependent_h():
    G = build_grid(BOX, 1 / 8, "16")
    spec = hm.riemannian(axes=[1.0, 0.5], omega=1.0)
    u = smooth_field(G, (0.3, 0.2, 0.5, 0.0, 0.0))
    t = 0.02  # inside the localization window (about 0.029 here)
    info = {}
    k = fl.t_upper(G, spec, u, t, "kernel", info=info)
    assert info["method"] == "kernel"
    s = fl.t_upper(G, spec, u, t, "stepping", delta=t)
    assert np.nanmax(np.abs(k - s)) <= fl.lipschitz_bound(G, u) * G.h


def test_kernel_falls_back_outside_window():
    u = smooth_field(G32, (1.0, 1.0, 1.0, 1.0, 1.0))
    info = {}
    fl.t_upper(G32, QUAD, u, 0.01, "kernel", info=info)  # window is about 0.005
    assert info["method"] == "stepping" and "fallback" in info


@settings(max_examples=10, deadline=None)
@given(coefs)
def test_reflection_duality_is_exact(coef):
    u = smooth_field(G32, coef)
    spec = hm.riemannian(axes=[1.0, 0.4], omega=1.3)
    t = 2 * G32.h
    via_reflection = fl.t_lower(G32, spec, u, t, delta=G32.h, reach=3)
    direct = fl.t_lower_direct(G32, spec, u, t, delta=G32.h, reach=3)
    np.testing.assert_array_equal(via_reflection, direct)


# -- slopes and energies ------------------------------------------------------------------------

def test_linear_function_flows_and_slopes_exactly():
    """For u = e.x and H = |p|^2, T^s u = u + s |e|^2 when 2 s e / h is a lattice offset."""
    u = linear(G32)
    s = 2 * G32.h  # optimal offset 2 s e / h = (4, 2)
    away = G32.inner(6 * G32.h)
    Tu = fl.t_upper(G32, QUAD, u, s, delta=s, reach=6)
    np.testing.assert_allclose(Tu[away], u[away] + s * 1.25, rtol=0, atol=1e-14)
    Tl = fl.t_lower(G32, QUAD, u, s, delta=s, reach=6)
    np.testing.assert_allclose(Tl[away], u[away] - s * 1.25, rtol=0, atol=1e-14)
    sf = fl.slope_fields(G32, QUAD, u, [s], reach=6)
    ok = away & ~sf.low_confidence
    assert ok.any()
    np.testing.assert_allclose(sf.s_plus[ok], 1.25, atol=1e-12)
    np.testing.assert_allclose(sf.s_minus[ok], 1.25, atol=1e-12)
    assert fl.discrete_energy(G32, QUAD, u) == pytest.approx(1.25, abs=1e-12)


def test_lipschitz_bound_of_linear_function():
    # e is parallel to the stencil offset (2, 1), so the bound is attained exactly
    assert fl.lipschitz_bound(G32, linear(G32)) == pytest.approx(np.hypot(*E), rel=1e-12)


def test_cone_slope_estimate():
    x0 = np.array([0.5, 0.5])
    u = np.hypot(*(G32.coords - x0).transpose(2, 0, 1))
    probes = [G32.h, 2 * G32.h, 4 * G32.h]
    sf = fl.slope_fields(G32, QUAD, u, probes)
    assert sf.q_plus.shape == (3,) + G32.shape
    np.testing.assert_array_equal(sf.s_plus_smallest, sf.q_plus[0])
    assert np.all(sf.s_plus[G32.inside] >= sf.s_plus_smallest[G32.inside])
    # |Du| = 1 so S+u = H(Du) = 1; the max over probes is within a few percent
    ok = G32.inside & ~sf.low_confidence & (np.hypot(*(G32.coords - x0).transpose(2, 0, 1)) > 0.1)
    assert np.max(np.abs(sf.s_plus[ok] - 1.0)) < 0.05


def test_discrete_gradient_exact_on_quadratics():
    u = smooth_field(G32, (0.3, -0.2, 1.0, 0.5, 0.0))
    g = fl.discrete_gradient(G32, u)
    x, y = G32.coords[..., 0], G32.coords[..., 1]
    gx = 0.3 + 2 * (x - 0.5) + 0.5 * (y - 0.6)
    gy = -0.2 + 0.5 * (x - 0.3)
    inner = G32.inner(2 * G32.h)
    np.testing.assert_allclose(g[..., 0][inner], gx[inner], atol=1e-12)
    np.testing.assert_allclose(g[..., 1][inner], gy[inner], atol=1e-12)


def test_profile_constants_for_quadratic():
    prof = fl.default_profile(G32, QUAD)
    assert fl.speed_bound(prof, 0.1) == 2.0  # floored
    assert fl.speed_bound(prof, 1.0) > 4.0  # M(t) = t/4 must exceed 1
    u = smooth_field(G32, (0.5, 0.5, 0.0, 0.0, 0.0))
    w = fl.convexity_window(G32, QUAD, u, 0.25, prof)
    assert 0 < w < 0.25
    assert fl.flow_reach(G32, QUAD, u, 0.1, prof) >= 1


def test_flow_errors():
    u = linear(G32)
    with pytest.raises(DomainError):
        fl.t_upper(G32, QUAD, u[:-1], 0.1)
    bad = u.copy()
    bad[5, 5] = np.nan
    with pytest.raises(DomainError):
        fl.t_upper(G32, QUAD, bad, 0.1)
    with pytest.raises(DomainError):
        fl.t_upper(G32, QUAD, u, -0.1)
    with pytest.raises(DomainError):
        fl.t_upper(G32, QUAD, u, 0.1, method="magic")
    with pytest.raises(DomainError):
        fl.slope_fields(G32, QUAD, u, [0.0])
    with pytest.raises(DomainError):
        fl.discrete_energy(G32, QUAD, u, np.zeros(G32.shape, bool))
    np.testing.assert_array_equal(fl.t_upper(G32, QUAD, u, 0.0), u)
