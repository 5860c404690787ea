import warnings

import numpy as np
import pytest

from hypclose.cocycle import (build_chart_data, check_integrability, finite_lyapunov, lyapunov_basis,
                              oseledets_splitting, pesin_radius, read_local_map, tempered_envelope)
from hypclose.harness.orbits import generate_orbit, periodic_window
from hypclose.harness.systems import load_system

GOLD = (3 + np.sqrt(5)) / 2
P_FIX = (1.3 + np.sqrt(5.69)) / 2  # saddle fixed point of (x^2 - 1 - 0.3 y, x)


def linear_window(n=200):
    return periodic_window(load_system("linear diag=2,0.5"), np.zeros((1, 2)), n, n)


def cat_window(n=300):
    return generate_orbit(load_system("cat_map"), [0.1234, 0.5678], n, L=n, policy="inverse")


def fixed_window(n=200):
    return periodic_window(load_system("complex_henon c=-1 b=0.3"), np.array([[P_FIX, P_FIX]]), n, n)


def sin_angle(a, b):
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return np.sqrt(max(0.0, 1 - abs(np.vdot(a, b)) ** 2))


def test_linear_spectrum():
    sp = finite_lyapunov(linear_window())
    assert np.allclose(sp.exponents, [np.log(2), -np.log(2)], atol=1e-12)
    assert sp.m0 == 1 and np.isclose(sp.gap, 2 * np.log(2))


def test_cat_spectrum():
    sp = finite_lyapunov(cat_window(1000))
    assert np.allclose(sp.exponents, [np.log(GOLD), -np.log(GOLD)], atol=1e-10)


def test_short_window_rejected():
    with pytest.raises(ValueError):
        finite_lyapunov(linear_window(10))


def test_linear_splitting_and_basis():
    w = linear_window()
    sp = finite_lyapunov(w)
    split = oseledets_splitting(w, sp)
    assert np.allclose(np.abs(split.Eu[:, :, 0]), [1, 0])
    assert np.allclose(np.abs(split.Es[:, :, 0]), [0, 1])
    fr = lyapunov_basis(w, split, sp, 0.1)
    for f in fr.frames:
        assert np.allclose(f.c_gamma, np.eye(2), atol=1e-12)
    # conjugated unstable block is 2.0, inside [e^{ln 2 - 0.1}, e^{ln 2 + 0.1}]
    assert np.allclose(fr.blocks_u, 2.0) and np.allclose(fr.blocks_s, 0.5)
    assert np.exp(np.log(2) - 0.1) <= 2.0 <= np.exp(np.log(2) + 0.1)


def test_cat_splitting_is_eigenbasis():
    w = cat_window()
    sp = finite_lyapunov(w)
    split = oseledets_splitting(w, sp)
    vals, vecs = np.linalg.eig(np.array([[2.0, 1.0], [1.0, 1.0]]))
    vu, vs = vecs[:, np.argmax(vals)], vecs[:, np.argmin(vals)]
    j = len(w) // 2
    assert sin_angle(split.Eu[j, :, 0], vu) < 1e-10 and sin_angle(split.Es[j, :, 0], vs) < 1e-10
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fr = lyapunov_basis(w, split, sp, 0.1)
    f = fr.frames[j]
    conj = f.c_gamma_inv @ np.array([[2, 1], [1, 1]]) @ f.c_gamma
    assert np.allclose(np.abs(conj), np.diag([GOLD, 1 / GOLD]), atol=1e-9)


def test_fixed_point_splitting_and_local_map():
    w = fixed_window()
    d = build_chart_data(w, 0.1, 1e-3)
    jac = d.system.df(np.array([P_FIX, P_FIX]))
    vals, vecs = np.linalg.eig(jac)
    iu = np.argmax(np.abs(vals))
    assert sin_angle(d.splitting.Eu[200, :, 0], vecs[:, iu]) < 1e-10
    assert sin_angle(d.splitting.Es[200, :, 0], vecs[:, 1 - iu]) < 1e-10
    g = read_local_map(d, 0)
    assert np.isclose(g.A[0, 0], vals[iu]) and np.isclose(g.B[0, 0], vals[1 - iu])
    # remainder is quadratic: halving the argument quarters it
    v = np.array([[1e-4, 2e-4j]])
    assert np.allclose(g.remainder(v / 2), g.remainder(v) / 4, rtol=1e-6)
    assert g.delta_nl <= 5 * d.h


def test_linear_local_map_has_no_remainder():
    w = linear_window()
    d = build_chart_data(w, 0.1, 1e-3)
    g = read_local_map(d, 3)
    assert np.allclose(g.remainder(np.array([[0.1, 0.2]])), 0) and g.delta_nl < 1e-15


def test_pesin_radius_constants():
    w = linear_window()
    sp = finite_lyapunov(w)
    fr = lyapunov_basis(w, oseledets_splitting(w, sp), sp, 0.1)
    r = pesin_radius(w, fr, 0.1, eps1=1.0, p=2.0, C=1.0)
    assert np.allclose(r, 0.5)


def test_tempered_envelope():
    a = np.ones(41)
    assert np.allclose(tempered_envelope(a, 0.1), 1)
    a[20] = 1e3
    env = tempered_envelope(a, 0.1)
    assert np.allclose(env[21:30] / env[20:29], np.exp(-0.1))
    assert np.allclose(env[11:20] / env[12:21], np.exp(-0.1))
    r = 1 / env
    ratio = r[1:] / r[:-1]
    assert np.all((ratio >= np.exp(-0.1) - 1e-12) & (ratio <= np.exp(0.1) + 1e-12))


def test_chart_data_verifies_on_cycle():
    from hypclose.harness.henon_orbits import continue_cycle, cycle_points
    xs = continue_cycle("0001" * 10 + "01", -1, 0.3)
    s = load_system("complex_henon c=-1 b=0.3")
    w = periodic_window(s, cycle_points(xs), 3 * len(xs), 3 * len(xs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = build_chart_data(w, 0.1, 1e-3)
    ver = d.verify()
    assert ver["ok"], ver
    assert read_local_map(d, 5).delta_nl <= 5 * d.h


def test_integrability():
    assert check_integrability(fixed_window()) == (0.0, 1.0)
    s = load_system("meromorphic_yx")
    w = generate_orbit(s, [0.7 + 0.2j, 1.3 - 0.4j], 10000)
    mean, low = check_integrability(w)
    assert np.isfinite(mean) and low > 0
    pts = w.points.copy()
    pts[5, 0] = 0.0
    with pytest.raises(ValueError):
        check_integrability(type(w)(pts, w.L, w.M, s))
