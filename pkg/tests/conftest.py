import warnings

import numpy as np
import pytest
from hypothesis import settings

from hypclose.cocycle import build_chart_data
from hypclose.closing import budget_from_data
from hypclose.harness.henon_orbits import block_itinerary, continue_cycle, cycle_points, horseshoe_cycle
from hypclose.harness.orbits import periodic_window
from hypclose.harness.systems import load_system

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# closing: continued cycles of the complex Henon map c=-1, b=0.3
CLOSING_WORDS = ("0" * 120 + "1", "0001" * 30 + "01", "0111" * 30 + "1")
CLOSING = dict(gamma=0.1, h=1e-3, gamma0=0.005, r0=0.01, eta=1e-3)

# coding: block horseshoe of the complex Henon map c=-4, b=0.1
CODING = dict(seed=2, K1=10, K2=4, blocks=800, gamma=0.2, h=3.5e-3, gamma0=0.009, eta=2e-3, H=3, depth=6)


def closing_data(word):
    s = load_system("complex_henon c=-1 b=0.3")
    xs = continue_cycle(word, -1, 0.3)
    n = len(xs)
    w = periodic_window(s, cycle_points(xs), 3 * n, 3 * n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d = build_chart_data(w, CLOSING["gamma"], CLOSING["h"])
    return d, budget_from_data(d, CLOSING["gamma0"], eta=CLOSING["eta"], r0=CLOSING["r0"])


@pytest.fixture(scope="session")
def henon_closing():
    """Chart data and budget along the cycle that lingers at the saddle fixed point."""
    return closing_data(CLOSING_WORDS[0])


@pytest.fixture(scope="session")
def closing_sets():
    return [closing_data(w) for w in CLOSING_WORDS]


def horseshoe_window(seed, K1, K2, blocks):
    s = load_system("complex_henon c=-4 b=0.1")
    rng = np.random.default_rng(seed)
    c1, c2 = rng.choice([1, -1], K1), rng.choice([1, -1], K2)
    signs, _ = block_itinerary(rng, c1, c2, blocks)
    xs = horseshoe_cycle(signs, -4, 0.1)
    p = len(xs)
    return periodic_window(s, cycle_points(xs), p // 2 - 1, p // 2 - 1), rng


@pytest.fixture(scope="session")
def horseshoe_tree():
    """Depth-6 coding tree on the block horseshoe, with the rng that follows its construction."""
    from hypclose.coding import bowen_separated, build_coding_tree, harvest_returns, window_orbits
    c = CODING
    w, rng = horseshoe_window(c["seed"], c["K1"], c["K2"], c["blocks"])
    d = build_chart_data(w, c["gamma"], c["h"])
    bud = budget_from_data(d, c["gamma0"], eta=c["eta"])
    n0 = c["K1"] + c["K2"] + 1
    margin = len(w) // 6
    cand = np.arange(-w.L + margin, w.M - margin)
    sep = bowen_separated(window_orbits(w, cand, n0 + 1), 0.5, w.system, labels=cand)
    fam = harvest_returns(sep, w, c["eta"], range(10, 21), H=c["H"], max_members=2)
    tree = build_coding_tree(d, fam, c["depth"], bud)
    return tree, bud, sep


# ---------------------------------------------------------------------------
# one line per acceptance criterion in the terminal summary

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        status = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture(scope="session")
def periodic_tree():
    """N = 1 coding tree on the period-4 horseshoe cycle with itinerary (+, +, -, +)."""
    from hypclose.coding import build_coding_tree, returns_on_cycle
    s = load_system("complex_henon c=-4 b=0.1")
    xs = horseshoe_cycle([1, 1, -1, 1], -4, 0.1)
    pts = cycle_points(xs)
    w = periodic_window(s, pts, 200 * len(xs), 200 * len(xs))
    d = build_chart_data(w, CODING["gamma"], CODING["h"])
    bud = budget_from_data(d, CODING["gamma0"])
    tree = build_coding_tree(d, returns_on_cycle(w, [0], len(xs)), 3, bud)
    return tree, pts
