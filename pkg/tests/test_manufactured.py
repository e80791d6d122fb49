import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnp_twogrid.fem import FeFunction, apply_dirichlet
from pnp_twogrid.manufactured import (SineProduct, exact_solution, fd_poisson_load,
                                      fd_species_load, interpolation_baseline, validate_loads)
from pnp_twogrid.solvers import Discretization, gummel_solve
from pnp_twogrid.cli import error_table

from conftest import mesh


def test_laplacian_at_center():
    phi = SineProduct(1)
    x = np.array([[0.5, 0.5, 0.5]])
    assert phi.laplacian(x)[0] == pytest.approx(-3 * np.pi ** 2, rel=1e-14)
    # second-order central difference cross-check
    h = 1e-3
    fd = sum((phi(x + h * e) - 2 * phi(x) + phi(x - h * e))[0] / h ** 2 for e in np.eye(3))
    assert fd == pytest.approx(-3 * np.pi ** 2, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 3), x=st.tuples(*[st.floats(0.05, 0.95)] * 3))
def test_gradient_matches_central_difference(k, x):
    u = SineProduct(k)
    x = np.array([x])
    h = 1e-6
    fd = np.array([(u(x + h * e) - u(x - h * e))[0] / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(u.grad(x)[0], fd, atol=1e-6)


def test_loads_match_fd_oracle(case):
    assert validate_loads(case, n_points=100, tol=1e-6) <= 1e-6


def test_loads_match_fd_oracle_flipped_sign():
    assert validate_loads(exact_solution(+1.0), n_points=100, tol=1e-6, seed=4) <= 1e-6


def test_validate_loads_detects_wrong_load(case, monkeypatch):
    from pnp_twogrid import manufactured

    wrong = lambda x: np.zeros(len(x))  # noqa: E731
    monkeypatch.setattr(manufactured.ManufacturedCase, "poisson_load", lambda self: wrong)
    with pytest.raises(AssertionError):
        validate_loads(case)


def test_species_load_closed_form_at_quarter(case):
    x = np.array([[0.25, 0.25, 0.25]])
    pi = np.pi
    s1 = np.sin(pi / 4)
    # p1 = sin(2 pi x)..., at 1/4: sin = 1, cos = 0, so grad p1 = 0
    p1 = 1.0
    lap_p1 = -3 * (2 * pi) ** 2
    lap_phi = -3 * pi ** 2 * s1 ** 3
    expected = -lap_p1 - 1.0 * (0.0 + p1 * lap_phi)
    assert case.species_load(0)(x)[0] == pytest.approx(expected, rel=1e-13)
    assert fd_species_load(case, 0, x)[0] == pytest.approx(expected, abs=1e-6)


def test_poisson_load_closed_form(case):
    x = np.array([[0.25, 0.25, 0.25]])
    p1 = 1.0
    p2 = np.sin(3 * np.pi / 4) ** 3
    expected = 3 * np.pi ** 2 * np.sin(np.pi / 4) ** 3 - (p1 - p2)
    assert case.poisson_load()(x)[0] == pytest.approx(expected, rel=1e-13)
    assert fd_poisson_load(case, x)[0] == pytest.approx(expected, abs=1e-6)


def test_fields_vanish_on_boundary(case):
    corners = np.array([[0, 0, 0], [1, 1, 1], [1, 0, 1], [0.3, 0.0, 0.7], [1.0, 0.4, 0.2]], float)
    for u in case.fields.values():
        np.testing.assert_allclose(u(corners), 0.0, atol=1e-14)


def test_level0_interpolant_is_zero(case):
    for u in case.fields.values():
        assert np.all(np.abs(FeFunction.interpolate(mesh(0), u).coeffs) < 1e-14)


def test_interpolation_baseline_rates():
    t2, t3, t4 = (interpolation_baseline(L) for L in (2, 3, 4))
    assert 1.8 <= np.log2(t2["phi"]["L2"] / t3["phi"]["L2"]) <= 2.2
    assert 0.85 <= np.log2(t2["phi"]["H1"] / t3["phi"]["H1"]) <= 1.15
    for name in ("p1", "p2"):
        assert 1.7 <= np.log2(t3[name]["L2"] / t4[name]["L2"]) <= 2.2
        assert 0.8 <= np.log2(t3[name]["H1"] / t4[name]["H1"]) <= 1.15


def _interpolated_residual_dual_norm(level):
    """K^{-1} dual norm of the Poisson residual of the exact interpolants."""
    case = exact_solution()
    m = mesh(level)
    disc = Discretization(m, case.coeffs, case.rhs())
    phi = FeFunction.interpolate(m, case.phi)
    p = [FeFunction.interpolate(m, u) for u in case.p]
    A, b = disc.poisson_system(p)
    r = A @ phi.coeffs - b
    inner = ~m.boundary_vertex
    K, _ = apply_dirichlet(disc.stiff_eps, np.zeros(m.n_vertices), np.flatnonzero(m.boundary_vertex), 0.0)
    z = np.linalg.solve(K.to_dense(), np.where(inner, r, 0.0))
    return np.sqrt(max(r[inner] @ z[inner], 0.0))


def test_weak_residual_consistency():
    norms = [_interpolated_residual_dual_norm(L) for L in (2, 3, 4)]
    orders = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    assert np.all(orders >= 0.9), orders


def test_sign_coherence():
    """Flipping the coupling sign with matching loads keeps the scheme consistent."""
    errs = []
    for sign in (-1.0, 1.0):
        case = exact_solution(sign)
        state, _ = gummel_solve(mesh(3), case.coeffs, case.rhs())
        errs.append(error_table(state, case))
    for name in ("phi", "p1", "p2"):
        for norm in ("L2", "H1"):
            assert errs[1][name][norm] == pytest.approx(errs[0][name][norm], rel=0.01)
