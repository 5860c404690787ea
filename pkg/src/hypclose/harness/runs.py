"""The six CLI tasks.  Each writes records through a sink and returns an exit status."""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import closing, coding
from ..cocycle import ChartCollapse, SplittingDegenerate, build_chart_data, check_integrability, finite_lyapunov
from ..core import GraphError
from ..graphtransform import ParameterBudget, TransformError, validate_budget
from .config import ConfigError
from .henon_orbits import block_itinerary, continue_cycle, cycle_points, horseshoe_cycle
from .orbits import OrbitError, generate_orbit, periodic_window
from .systems import SystemSpecError, load_system

log = logging.getLogger(__name__)

OK, USAGE, BUDGET, NUMERICAL = 0, 1, 2, 3

NUMERICAL_ERRORS = (closing.ClosingError, coding.CodingError, OrbitError, TransformError, ChartCollapse,
                    SplittingDegenerate, GraphError, np.linalg.LinAlgError, ArithmeticError)
USAGE_ERRORS = (ConfigError, SystemSpecError)


class NumericalFailure(RuntimeError):
    pass


class BudgetFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# orbit sources


def _henon_params(system):
    if system.kind != "complex_henon":
        raise ConfigError(f"this orbit source needs complex_henon, not {system.kind}")
    return system.params["c"], system.params["b"]


def _cycle(signs, c, b):
    try:
        return horseshoe_cycle(signs, c, b)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from None


def make_window(cfg, system, rng):
    """Orbit window for the configured source (not used by orbit=uniform)."""
    src = cfg.orbit
    if src == "random":
        if cfg.x0:
            seed = np.array([complex(v.replace("i", "j")) for v in cfg.x0.split(",")])
        else:
            seed = rng.uniform(0.0, 0.1, system.k) + 0j
        return generate_orbit(system, seed, cfg.M or cfg.samples, cfg.L, cfg.transient)
    if src == "cycle":
        c, b = _henon_params(system)
        xs = continue_cycle(cfg.expanded_word(), c, b, bulge=cfg.bulge)
        if xs is None:
            raise NumericalFailure("cycle continuation failed")
        p = len(xs)
        return periodic_window(system, cycle_points(xs), cfg.L or 3 * p, cfg.M or 3 * p)
    if src == "periodic":
        c, b = _henon_params(system)
        xs = _cycle(cfg.ints("signs"), c, b)
        p = len(xs)
        return periodic_window(system, cycle_points(xs), cfg.L or 200 * p, cfg.M or 200 * p)
    if src in ("horseshoe", "blocks"):
        c, b = _henon_params(system)
        if src == "horseshoe":
            signs = rng.choice([1, -1], cfg.samples)
        else:
            c1, c2 = rng.choice([1, -1], cfg.K1), rng.choice([1, -1], cfg.K2)
            signs, _ = block_itinerary(rng, c1, c2, cfg.blocks)
        xs = _cycle(signs, c, b)
        p = len(xs)
        return periodic_window(system, cycle_points(xs), cfg.L or p // 2 - 1, cfg.M or p // 2 - 1)
    raise ConfigError(f"unknown orbit source {src!r}")


def _setup(cfg):
    system = load_system(cfg.system, seed=cfg.seed)
    return system, np.random.default_rng(cfg.seed)


def _margin(cfg, window):
    return cfg.margin if 2 * cfg.margin < len(window) // 2 else len(window) // 6


def _budget(cfg, data, sink, override):
    bud = closing.budget_from_data(data, cfg.gamma0, eta=cfg.eta, r0=cfg.r0, eps=cfg.eps,
                                   delta_measure=cfg.delta_measure)
    rep = validate_budget(bud)
    sink.emit("budget", params=vars(bud), rows=rep["rows"], ok=rep["ok"],
              override=bool(override and not rep["ok"]))
    if not rep["ok"] and not override:
        raise BudgetFailure("budget fails: " + "; ".join(r["name"] for r in rep["rows"] if not r["ok"]))
    return bud


# ---------------------------------------------------------------------------
# tasks


def run_lyap(cfg, sink, override=False):
    system, rng = _setup(cfg)
    w = make_window(cfg, system, rng)
    sp = finite_lyapunov(w)
    sink.emit("spectrum", system=system.describe(), exponents=sp.exponents, m0=sp.m0, gap=sp.gap,
              length=sp.length, skipped=sp.skipped)
    return OK


def run_chart(cfg, sink, override=False):
    system, rng = _setup(cfg)
    w = make_window(cfg, system, rng)
    d = build_chart_data(w, cfg.gamma, cfg.h, seed=cfg.seed)
    ver = d.verify(seed=cfg.seed)
    mean_log, min_dist = check_integrability(w)
    sink.emit("chart", system=system.describe(), gamma=d.gamma, h=d.h, exponents=d.spectrum.exponents,
              r_min=float(d.r.min()), r_median=float(np.median(d.r)), r_max=float(d.r.max()),
              tempered=ver["tempered"], g0=ver["g0"], d2_times_r=ver["d2_times_r"],
              mean_log_dist_I=mean_log, min_dist_I=min_dist, ok=ver["ok"])
    return OK if ver["ok"] else NUMERICAL


def run_budget(cfg, sink, override=False):
    chis = (cfg.chi_top, cfg.chi_u, cfg.chi_s)
    if any(np.isnan(chis)):
        system, rng = _setup(cfg)
        sp = finite_lyapunov(make_window(cfg, system, rng))
        chis = tuple(v if not np.isnan(v) else m for v, m in zip(chis, (sp.chi_top, sp.chi_u, sp.chi_s)))
    bud = ParameterBudget(cfg.gamma, cfg.gamma0, cfg.h, *chis, eta=cfg.eta, delta_measure=cfg.delta_measure,
                          eps=cfg.eps, r0=cfg.r0)
    rep = validate_budget(bud)
    sink.emit("budget", params=vars(bud), rows=rep["rows"], ok=rep["ok"],
              override=bool(override and not rep["ok"]))
    return OK if rep["ok"] or override else BUDGET


def select_returns(returns, count):
    """`count` near-returns spread evenly over the sorted list."""
    if len(returns) <= count:
        return list(returns)
    picks = np.unique(np.linspace(0, len(returns) - 1, count).round().astype(int))
    return [returns[k] for k in picks]


def certificate_payload(data, cert, H):
    lat = cert.lattice
    z, _, rel = closing.lattice_points(data, cert.i, cert.m, lat.B, lat.A)
    out = cert.record()
    out.update(window_distance=closing.window_distance(data.window, cert.i, cert.m, H),
               generations=cert.diagnostics["generations"], cauchy_ok=cert.diagnostics["cauchy_ok"],
               lattice_relation=float(np.max(rel)) if np.size(rel) else 0.0,
               lattice_ineq=closing.lattice_inequalities(z, data.gamma),
               budget_ok=cert.diagnostics["budget_ok"], override=cert.diagnostics["override"])
    return out


def run_close(cfg, sink, override=False):
    system, rng = _setup(cfg)
    w = make_window(cfg, system, rng)
    data = build_chart_data(w, cfg.gamma, cfg.h, seed=cfg.seed)
    bud = _budget(cfg, data, sink, override)
    good = closing.good_indices(data, cfg.r0)
    found = closing.find_near_returns(w, cfg.eta, cfg.max_m, cfg.H, good=good, margin=_margin(cfg, w))
    chosen = select_returns(found, cfg.max_returns)
    log.info("%d near-returns, closing %d", len(found), len(chosen))
    if not chosen:
        raise NumericalFailure("no near-returns at this eta")

    def task(im):
        i, m = im
        try:
            cert = closing.close_orbit(data, i, m, bud, cap=cfg.J, cap_backward=cfg.L_gen, override=override,
                                       chart_constant=cfg.eps, residual_tol=cfg.residual_tol,
                                       polish_tol=cfg.polish_tol)
            return certificate_payload(data, cert, cfg.H)
        except NUMERICAL_ERRORS as exc:
            return {"i": i, "m": m, "ok": False, "error": f"{type(exc).__name__}: {exc}"}

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        payloads = list(pool.map(task, chosen))
    for p in payloads:
        sink.emit("certificate", **p)
    return OK if any(p["ok"] for p in payloads) else NUMERICAL


def build_tree(cfg, sink, override=False):
    """Window, chart data, budget, separated set, return family and coding tree of a coding run."""
    system, rng = _setup(cfg)
    w = make_window(cfg, system, rng)
    data = build_chart_data(w, cfg.gamma, cfg.h, seed=cfg.seed)
    bud = _budget(cfg, data, sink, override)
    margin = _margin(cfg, w)
    n_range = range(cfg.n_min, cfg.n_max + 1)
    cand = np.arange(-w.L + margin, w.M - margin)
    sep = coding.bowen_separated(coding.window_orbits(w, cand, cfg.n_min + 1), cfg.sep_eps, system, labels=cand)
    fam = coding.harvest_returns(sep, w, cfg.eta, n_range, H=cfg.H, max_members=cfg.N)
    tree = coding.build_coding_tree(data, fam, cfg.Lw, bud, override=override)
    return tree, sep, rng


def run_code(cfg, sink, override=False):
    tree, sep, rng = build_tree(cfg, sink, override)
    fam = tree.family
    decay = coding.decay_report(tree)
    nest = coding.nesting_report(tree)
    shadow = coding.shadow_report(tree)
    separ = coding.separation_report(tree)
    semi = coding.check_semiconjugacy(tree, coding.random_words(rng, tree.N, cfg.words, cfg.Lw))
    ent = coding.coded_entropy(tree, rng)
    cont = coding.coding_continuity(tree, rng)
    w = tree.data.window
    ref = w.points[w.L - min(w.L, 3000):w.L + min(w.M, 3000)]
    meas = coding.pushforward_stats(tree, coding.STANDARD_TESTS, rng, cfg.mc_words, reference=ref)
    ok = (decay["ok"] and nest["ok"] and shadow["disjoint"] and separ["ok"]
          and semi["residual"] <= cfg.semiconj_tol and ent["h"] >= ent["target"] - cfg.rho
          and all(r["defect_ok"] for r in meas.values()))
    sink.emit("coding", center=fam.center, n=fam.n, members=fam.members, N=fam.N, separated=len(sep),
              depth=cfg.Lw, diam_v=tree.diam_v, diam_h=tree.diam_h, decay_ok=decay["ok"], nesting=nest,
              shadow=shadow, separation=separ, semiconjugacy=semi, entropy=ent,
              continuity_max_ratio=cont["max_ratio"], measure=meas, ok=bool(ok))
    return OK if ok else NUMERICAL


def run_entropy(cfg, sink, override=False):
    system, rng = _setup(cfg)
    if cfg.orbit == "uniform":
        pts = rng.uniform(0.0, 1.0, (cfg.samples, system.k)) + 0j
    else:
        pts = make_window(cfg, system, rng).points[:cfg.samples]
    est = coding.entropy_estimate(pts, system, cfg.floats("eps_list"), cfg.ints("m_list"))
    sink.emit("entropy", system=system.describe(), h=est.h, slopes=list(est.slopes.values()),
              eps_list=list(est.slopes), counts=list(est.counts.values()), m_list=est.m_list,
              warnings=est.warnings)
    return OK


TASKS = {"lyap": run_lyap, "chart": run_chart, "close": run_close, "code": run_code,
         "entropy": run_entropy, "budget": run_budget}
