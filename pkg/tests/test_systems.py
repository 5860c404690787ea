import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypclose.harness.henon_orbits import (anti_integrable_orbit, block_itinerary, continue_cycle, cycle_points,
                                           horseshoe_cycle, monodromy_exponents, newton_cycle)
from hypclose.harness.orbits import OrbitError, generate_orbit, make_window, periodic_window
from hypclose.harness.systems import SystemSpecError, derivative_self_test, load_system

SYSTEMS = ["complex_henon c=-1+0i b=0.3+0i", "classical_henon a=1.4 b=0.3", "cat_map", "doubling", "rotation",
           "linear diag=2,0.5", "meromorphic_yx"]


@pytest.mark.parametrize("text", SYSTEMS)
def test_self_test_passes(text):
    s = load_system(text)
    assert derivative_self_test(s, seed=3)


def test_henon_spec():
    s = load_system("complex_henon c=-1+0i b=0.3+0i")
    z = np.array([[0.3 + 0.1j, -0.2j], [5.0, 1.0]])
    assert s.invertible and not s.has_indeterminacy and np.all(s.dist_I(z) == 1)
    assert s.params["c"] == -1 and s.params["b"] == 0.3


def test_meromorphic_spec():
    s = load_system("meromorphic_yx")
    assert s.has_indeterminacy
    z = np.array([[0.5, 1.0], [3.0, 1.0], [0.0, 2.0]])
    assert np.allclose(s.dist_I(z), [0.5, 1.0, 0.0])


def test_cat_spec():
    s = load_system("cat_map")
    assert s.k == 2 and s.invertible and s.model == "torus"


def test_unknown_kind():
    with pytest.raises(SystemSpecError):
        load_system("lorenz")
    with pytest.raises(SystemSpecError):
        load_system("complex_henon q=1")


def test_broken_derivative_detected():
    s = load_system("classical_henon a=1.4 b=0.3")
    bad = type(s)(**{**s.__dict__, "df": lambda z: 1.01 * s.df(z)})
    with pytest.raises(SystemSpecError):
        derivative_self_test(bad)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.3, 0.3))
def test_henon_inverse_round_trip(x, y, im):
    s = load_system("complex_henon c=-1 b=0.3")
    z = np.array([x + 1j * im, y])
    assert np.allclose(s.inverse(s.f(z)), z, atol=1e-12)


def test_henon_backward_window():
    s = load_system("complex_henon c=-1 b=0.3")
    p = (1.3 + np.sqrt(5.69)) / 2
    seed = np.array([p + 1e-9, p])
    w = generate_orbit(s, seed, 10, L=10, policy="inverse")
    assert np.max(w.consistency()) <= 1e-10
    assert np.allclose(s.f(w.points[:-1]), w.points[1:], atol=1e-10)


def test_doubling_branch_policy():
    s = load_system("doubling")
    w = generate_orbit(s, [0.4], 3, L=4, policy="inverse", branches=0)
    assert np.allclose(w.points[:5, 0].real, [0.025, 0.05, 0.1, 0.2, 0.4])
    assert w.backward_itinerary_id == "branches:0000"


def test_meromorphic_indeterminacy_error():
    s = load_system("meromorphic_yx")
    # (1, 0) -> (0, 0) which lies on I
    with pytest.raises(OrbitError, match="index"):
        generate_orbit(s, [1.0, 0.0], 5)


def test_divergence_error():
    s = load_system("classical_henon a=1.4 b=0.3")
    with pytest.raises(OrbitError, match="diverges"):
        generate_orbit(s, [10.0, 0.0], 50)


def test_transient_discarded():
    s = load_system("classical_henon a=1.4 b=0.3")
    a = generate_orbit(s, [0.1, 0.1], 20, transient=5)
    b = generate_orbit(s, [0.1, 0.1], 25)
    assert np.allclose(a.points, b.points[5:])


def test_make_window_rejects_inconsistency():
    s = load_system("classical_henon a=1.4 b=0.3")
    pts = generate_orbit(s, [0.1, 0.1], 20).points.copy()
    pts[7, 0] += 1e-6
    with pytest.raises(OrbitError):
        make_window(s, pts, 0)


def test_periodic_window_indices():
    s = load_system("linear diag=2,0.5")
    w = periodic_window(s, np.zeros((1, 2)), 3, 4)
    assert len(w) == 8 and list(w.indices) == list(range(-3, 5))


def test_newton_cycle_fixed_point():
    p = (1.3 + np.sqrt(5.69)) / 2
    x, ok = newton_cycle(np.array([p + 1e-3 + 0j]), -1, 0.3)
    assert ok and abs(x[0] - p) < 1e-12


def test_continued_cycle_is_periodic():
    s = load_system("complex_henon c=-1 b=0.3")
    xs = continue_cycle("0001" * 5 + "01", -1, 0.3)
    pts = cycle_points(xs)
    assert np.allclose(s.f(pts), np.roll(pts, -1, axis=0), atol=1e-12)
    l1, l2 = monodromy_exponents(xs, 0.3)
    assert np.isclose(l1 + l2, np.log(0.3)) and l1 > 0 > l2


def test_horseshoe_cycle_and_blocks():
    s = load_system("complex_henon c=-4 b=0.1")
    rng = np.random.default_rng(0)
    signs, choice = block_itinerary(rng, [1, 1], [-1], 6)
    assert len(signs) == 24 and set(np.unique(choice)) <= {0, 1}
    assert np.all(signs[2::4] == np.where(choice == 0, 1, -1))
    pts = cycle_points(horseshoe_cycle(signs, -4, 0.1))
    assert np.allclose(s.f(pts), np.roll(pts, -1, axis=0), atol=1e-12)
    # the sign of x follows the itinerary
    assert np.all(np.sign(pts[:, 0].real) == signs)
    with pytest.raises(ValueError):
        horseshoe_cycle([1, -1], -0.5, 0.1)


def test_anti_integrable_limit():
    x = anti_integrable_orbit([1, -1, 1], -1e6, 0.1)
    assert np.allclose(x / 1e3, [1, -1, 1], atol=1e-3)
