import warnings

import numpy as np
import pytest

from hypclose.cocycle import build_chart_data
from hypclose.closing import (ClosingError, build_backward_family, build_forward_family, budget_from_data,
                              close_orbit, find_near_returns, hyperbolicity_certificate, lattice_inequalities,
                              lattice_points, limit_graphs, newton_polish, window_distance)
from hypclose.graphtransform import validate_budget
from hypclose.harness.orbits import generate_orbit, periodic_window
from hypclose.harness.systems import load_system

P_FIX = (1.3 + np.sqrt(5.69)) / 2
GOLD = (3 + np.sqrt(5)) / 2


def linear_data(n=100):
    w = periodic_window(load_system("linear diag=2,0.5"), np.zeros((1, 2)), n, n)
    return build_chart_data(w, 0.1, 1e-3)


def test_window_distance_and_exact_returns():
    s = load_system("complex_henon c=-1 b=0.3")
    from hypclose.harness.henon_orbits import continue_cycle, cycle_points
    xs = continue_cycle("0001", -1, 0.3)
    w = periodic_window(s, cycle_points(xs), 20, 20)
    found = find_near_returns(w, 1e-9, max_m=4)
    assert (0, 4) in found and all(m == 4 for _, m in found)
    assert window_distance(w, 0, 4) < 1e-12


def test_no_returns_at_eta_zero():
    s = load_system("classical_henon a=1.4 b=0.3")
    w = generate_orbit(s, [0.1, 0.1], 2000, transient=100)
    assert find_near_returns(w, 0.0, max_m=10) == []


def test_attractor_has_near_returns():
    s = load_system("classical_henon a=1.4 b=0.3")
    w = generate_orbit(s, [0.1, 0.1], 100000, transient=1000)
    found = find_near_returns(w, 1e-3, max_m=20)
    assert found
    i, m = found[0]
    # direct pair scan oracle
    assert window_distance(w, i, m) < 1e-3


def test_linear_exact_return_families_vanish():
    d = linear_data()
    B, dB, _ = build_forward_family(d, 0, 3, 5, 0.01)
    A, dA, _ = build_backward_family(d, 0, 3, 5, 0.01)
    for G in B + A:
        assert np.max(np.abs(G.coeffs)) < 1e-15
    z, amb, _ = lattice_points(d, 0, 3, B, A)
    assert np.allclose(amb, 0)
    Bi, Ai, res = limit_graphs(d, 0, 3, B, A)
    assert res["z_on_A"] == 0 and res["z_on_B"] == 0


def test_linear_close_at_origin():
    d = linear_data()
    bud = budget_from_data(d, 0.01, r0=0.01)
    cert = close_orbit(d, 0, 5, bud)
    assert cert.ok and np.allclose(cert.z, 0)


def test_hyperbolicity_oracles():
    lin = load_system("linear diag=2,0.5")
    rep = hyperbolicity_certificate(lin, np.zeros(2), 1, 0.1)
    assert np.allclose(np.abs(rep["eigenvalues"]), [2, 0.5]) and rep["counts"] == (1, 1)
    assert 0.5 <= np.exp(-0.2)
    cat = load_system("cat_map")
    rep = hyperbolicity_certificate(cat, np.array([0.2, 0.4]), 1, 0.1)
    assert np.allclose(np.abs(rep["eigenvalues"]), [GOLD, 1 / GOLD]) and rep["certified"]


def test_newton_polish():
    s = load_system("complex_henon c=-1 b=0.3")
    p = np.array([P_FIX, P_FIX], dtype=complex)
    z, its, ok = newton_polish(s, p, 1)
    assert ok and its == 0
    z, its, ok = newton_polish(s, p + 1e-3, 1)
    assert ok and its <= 6 and np.allclose(z, p, atol=1e-13)
    _, _, ok = newton_polish(s, np.array([1e5, -1e5]), 3)
    assert not ok


def test_henon_fixed_point_closing(henon_closing):
    d, bud = henon_closing
    assert validate_budget(bud)["ok"]
    found = find_near_returns(d.window, 1e-3, max_m=1)
    i = next(i for i, m in found if window_distance(d.window, i, 1) > 0)
    cert = close_orbit(d, i, 1, bud)
    assert cert.ok
    assert np.allclose(cert.z, [P_FIX, P_FIX], atol=1e-8)


def test_henon_lattice(henon_closing):
    d, bud = henon_closing
    cert = close_orbit(d, -134, 1, bud)
    lat = cert.lattice
    assert cert.ok and lat.cauchy_ok(d.gamma)
    z, _, rel = lattice_points(d, -134, 1, lat.B, lat.A)
    assert np.max(rel) <= 1e-8
    assert lattice_inequalities(z, d.gamma) <= 0
    assert lat.dB[0] <= 3 * d.h * d.radius(-134)
    # monotonicity of the diagonal intersections
    hr = d.h * d.radius(-134)
    for l, step in enumerate(cert.diagnostics["seq_steps"], start=1):
        assert step <= 4 * hr * np.exp(-d.gamma * (l - 1))


def test_henon_limit_graph_tangent(henon_closing):
    d, bud = henon_closing
    i = -134
    cert = close_orbit(d, i, 1, bud)
    Bi, Ai, res = limit_graphs(d, i, 1, cert.lattice.B, cert.lattice.A)
    assert res["z_on_A"] < 1e-12 and res["z_on_B"] < 1e-12 and res["invariance_residual"] < 1e-9
    zl = d.lyap_coords(i, cert.z)
    tangent = d.frame(i).c_gamma @ np.array([Ai.dphi(zl[1])[0], 1.0])
    es = cert.Es[:, 0]
    cosang = abs(np.vdot(tangent, es)) / np.linalg.norm(tangent) / np.linalg.norm(es)
    assert np.sqrt(max(0.0, 1 - cosang ** 2)) < 1e-4


def test_cat_map_rational_point():
    s = load_system("cat_map")
    x0 = np.array([0.2 + 1e-6, 0.4 + 1e-6])
    w = generate_orbit(s, x0, 60, L=60, policy="inverse")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d = build_chart_data(w, 0.1, 1e-3)
    bud = budget_from_data(d, 0.005, r0=float(d.r.min()))
    assert window_distance(w, 0, 2) < 1e-3
    cert = close_orbit(d, 0, 2, bud)
    # (0.2, 0.4) has period 2 under [[2, 1], [1, 1]] mod 1
    assert cert.residual <= 1e-10 and cert.ok
    assert np.max(s.dist(cert.z, np.array([0.2, 0.4]))) < 1e-10


def test_degenerate_and_failing_budget(henon_closing):
    d, bud = henon_closing
    with pytest.raises(ClosingError):
        close_orbit(d, 0, 0, bud)
    from dataclasses import replace
    bad = replace(bud, gamma0=0.25)
    with pytest.raises(ClosingError, match="budget"):
        close_orbit(d, -134, 1, bad)
    cert = close_orbit(d, -134, 1, replace(bud, gamma0=0.0051, chi_top=bud.chi_top + 50), override=True)
    assert cert.diagnostics["override"]
