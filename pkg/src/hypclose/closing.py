"""Closing Lemma engine: forward/backward graph families, lattice points, periodic point and certificates."""

from dataclasses import dataclass, field

import numpy as np

from .cocycle import read_local_map
from .core import HORIZONTAL, VERTICAL, constant_graph, graph_distance, intersect_graphs, opnorm
from .graphtransform import (ParameterBudget, TransformError, frame_change, pull_back, push_forward,
                             recenter, validate_budget)

GRAPH_STOP = 1e-11
POINT_STOP = 1e-12
CAUCHY_SLACK = 1e-10
LATTICE_TOL = 1e-8
RESIDUAL_TOL = 1e-9
POLISH_TOL = 1e-8


class ClosingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# near returns


def window_distance(w, i, m, H=8):
    """max_{0<=j<=H} 2^{-j} d(x_{i-j}, x_{i+m-j}), truncated at the window start."""
    best = 0.0
    for j in range(0, H + 1):
        if i - j < -w.L:
            break
        best = max(best, 2.0 ** (-j) * float(w.system.dist(w.x(i - j), w.x(i + m - j))))
    return best


def good_indices(data, r0):
    """Lambda_delta surrogate: r >= r0 and ||C^{+-1}|| <= 1/r0."""
    cn = np.array([f.norm() for f in data.frames.frames])
    ci = np.array([f.inv_norm() for f in data.frames.frames])
    return (data.r >= r0) & (cn <= 1 / r0) & (ci <= 1 / r0)


def find_near_returns(w, eta, max_m=20, H=8, good=None, margin=0):
    """All (i, m), 1 <= m <= max_m, with window distance < eta; sorted by m then i.

    `good` is an optional boolean mask over window rows (both endpoints must
    pass); `margin` keeps i and i + m at least that far from the window ends.
    """
    pts = w.points
    n = len(pts)
    out = []
    for m in range(1, max_m + 1):
        if n - m <= 0:
            break
        d = w.system.dist(pts[:-m], pts[m:])  # d[j] = dist(x_{j-L}, x_{j-L+m})
        wd = d.copy()
        for j in range(1, H + 1):
            shifted = np.full_like(d, 0.0)
            shifted[j:] = d[:-j] * 2.0 ** (-j)
            wd = np.maximum(wd, shifted)
        rows = np.nonzero(wd < eta)[0]
        for row in rows:
            if row < margin or row + m > n - 1 - margin:
                continue
            if good is not None and not (good[row] and good[row + m]):
                continue
            out.append((int(row) - w.L, m))
    return out


# ---------------------------------------------------------------------------
# families


@dataclass
class GraphLattice:
    i: int
    m: int
    B: list
    A: list
    dB: list
    dA: list
    z: np.ndarray = None  # (len(A), len(B), 2) Lyapunov coordinates at x_i
    stages: dict = field(default_factory=dict)

    def cauchy_ratios(self, which="B"):
        d = np.asarray(self.dB if which == "B" else self.dA)
        return d[1:] / d[:-1] if len(d) > 1 else np.array([])

    def cauchy_ok(self, gamma):
        ok = True
        for d in (self.dB, self.dA):
            for a, b in zip(d[:-1], d[1:]):
                ok &= b <= np.exp(-gamma) * a + CAUCHY_SLACK
        return bool(ok)


class _Maps:
    """Cached local maps along the near-return segment."""

    def __init__(self, data):
        self.data = data
        self.cache = {}

    def __call__(self, j):
        if j not in self.cache:
            self.cache[j] = read_local_map(self.data, j)
        return self.cache[j]


def _hr(data, j):
    return data.h * data.radius(j)


def forward_generation(data, maps, i, m, G, gamma0, keep=None):
    """m push-forwards from frame i then recentering from frame i+m back to frame i."""
    gamma = data.gamma
    for s in range(m):
        j = i + s
        rad = _hr(data, j + 1) if s < m - 1 else np.exp(gamma) * _hr(data, i + m)
        G, _ = push_forward(G, maps(j), radius=rad)
        if keep is not None:
            keep.append(G)
    M, t = frame_change(data.frame(i + m), data.window.x(i + m), data.frame(i), data.window.x(i), data.system)
    return recenter(G, M, t, _hr(data, i), gamma0, _hr(data, i))


def backward_generation(data, maps, i, m, G, gamma0, keep=None):
    """Recentering from frame i to frame i+m then m pull-backs to frame i."""
    gamma = data.gamma
    M, t = frame_change(data.frame(i), data.window.x(i), data.frame(i + m), data.window.x(i + m), data.system)
    G = recenter(G, M, t, _hr(data, i + m), gamma0, np.exp(-gamma) * _hr(data, i + m))
    for s in range(m - 1, -1, -1):
        j = i + s
        rad = _hr(data, j) if s > 0 else np.exp(gamma) * _hr(data, i)
        G = pull_back(G, maps(j), gamma, gamma0=gamma0, beta=G.offset_bound, radius=rad)
        if keep is not None:
            keep.append(G)
    return G


def build_forward_family(data, i, m, J, gamma0, maps=None, stop=GRAPH_STOP, keep_stages=False):
    """B_0 = flat graph over hr(x_i), B_{j+1} = next forward generation of B_j."""
    maps = maps or _Maps(data)
    B = [constant_graph([0.0], HORIZONTAL, _hr(data, i), 0.0, 0.0)]
    dB, stages = [], []
    for j in range(J):
        try:
            nxt = forward_generation(data, maps, i, m, B[-1], gamma0, stages if keep_stages else None)
        except (TransformError, ValueError) as exc:
            raise ClosingError(f"forward generation {j}: {exc}") from exc
        dB.append(graph_distance(B[-1], nxt))
        B.append(nxt)
        if dB[-1] < stop:
            break
    return B, dB, stages


def build_backward_family(data, i, m, L, gamma0, maps=None, stop=GRAPH_STOP, keep_stages=False):
    """A_0 = flat vertical graph at x_i, A_{l+1} = next backward generation of A_l."""
    maps = maps or _Maps(data)
    A = [constant_graph([0.0], VERTICAL, np.exp(data.gamma) * _hr(data, i), 0.0, 0.0)]
    dA, stages = [], []
    for l in range(L):
        try:
            nxt = backward_generation(data, maps, i, m, A[-1], gamma0, stages if keep_stages else None)
        except (TransformError, ValueError) as exc:
            raise ClosingError(f"backward generation {l}: {exc}") from exc
        dA.append(graph_distance(A[-1], nxt))
        A.append(nxt)
        if dA[-1] < stop:
            break
    return A, dA, stages


def iterate(system, z, m):
    for _ in range(m):
        z = system.f(z)
    return z


def lattice_points(data, i, m, B, A):
    """z_{l,j} = B_j cap A_l in Lyapunov coordinates at x_i, plus the f^m relation residual."""
    z = np.empty((len(A), len(B), 2), dtype=complex)
    for l, a in enumerate(A):
        for j, b in enumerate(B):
            z[l, j] = intersect_graphs(b, a)
    amb = data.ambient(i, z.reshape(-1, 2)).reshape(z.shape)
    img = iterate(data.system, amb[1:, :-1].reshape(-1, 2), m).reshape(amb[1:, :-1].shape)
    rel = data.system.dist(img, amb[:-1, 1:]) if len(A) > 1 and len(B) > 1 else np.zeros((0, 0))
    return z, amb, rel


def lattice_inequalities(z, gamma, slack=1e-9):
    """Lemma-3 points 2-3 on all quadruples: worst violation (<= 0 means satisfied)."""
    nl, nj = z.shape[:2]
    worst = -np.inf
    q = np.exp(-gamma)
    for j in range(nj - 1):
        for l1 in range(1, nl):
            for l2 in range(1, nl):
                if l1 == l2:
                    continue
                lhs = np.linalg.norm(z[l1, j] - z[l2, j])
                rhs = q * np.linalg.norm(z[l1 - 1, j + 1] - z[l2 - 1, j + 1])
                worst = max(worst, lhs - rhs - slack)
    for l in range(1, nl):
        for j1 in range(nj - 1):
            for j2 in range(nj - 1):
                if j1 == j2:
                    continue
                lhs = np.linalg.norm(z[l, j1] - z[l, j2])
                rhs = np.exp(gamma) * np.linalg.norm(z[l - 1, j1 + 1] - z[l - 1, j2 + 1])
                worst = max(worst, rhs - lhs - slack)
    return float(worst) if np.isfinite(worst) else -1.0


# ---------------------------------------------------------------------------
# certificate


@dataclass
class ClosingCertificate:
    i: int
    m: int
    z: np.ndarray
    residual: float
    shadow: np.ndarray
    shadow_bound: np.ndarray
    eps: float
    eigenvalues: np.ndarray
    counts: tuple
    Eu: np.ndarray
    Es: np.ndarray
    polish_distance: float
    budget: dict
    lattice: GraphLattice = None
    ok: bool = False
    diagnostics: dict = field(default_factory=dict)

    def record(self):
        return {
            "i": self.i, "m": self.m, "z": [complex(v) for v in self.z], "residual": self.residual,
            "shadow_max_ratio": float(np.max(self.shadow / self.shadow_bound)),
            "eps": self.eps, "eig_moduli": [float(abs(v)) for v in self.eigenvalues],
            "counts": list(self.counts), "polish_distance": self.polish_distance, "ok": self.ok,
        }


def derivative_product(system, z, m):
    """Df^m(z) as (matrix scaled to unit max entry, log scale, log |det|)."""
    k = system.k
    P = np.eye(k, dtype=complex)
    logscale = 0.0
    logdet = 0.0
    for _ in range(m):
        J = system.df(z)
        P = J @ P
        s = np.abs(P).max()
        P /= s
        logscale += np.log(s)
        logdet += np.log(abs(np.linalg.det(J)))
        z = system.f(z)
    return P, logscale, logdet


def hyperbolicity_certificate(system, z, m, gamma, k1=None):
    """Eigenvalues of Df^m(z) (balanced product, determinant trick for k = 2) and counts vs e^{+-gamma}."""
    P, logscale, logdet = derivative_product(system, z, m)
    ev = np.linalg.eigvals(P)
    order = np.argsort(-np.abs(ev))
    ev = ev[order]
    logmod = np.log(np.maximum(np.abs(ev), 1e-300)) + logscale
    if system.k == 2:
        logmod[1] = logdet - logmod[0]
    phases = np.exp(1j * np.angle(ev))
    with np.errstate(over="ignore"):
        vals = phases * np.exp(logmod)
    n_u = int(np.sum(logmod >= gamma))
    n_s = int(np.sum(logmod <= -gamma))
    w, V = np.linalg.eig(P)
    V = V[:, np.argsort(-np.abs(w))]
    certified = n_u + n_s == system.k and (k1 is None or n_u == k1)
    return {"eigenvalues": vals, "log_moduli": logmod, "counts": (n_u, n_s), "Eu": V[:, :n_u],
            "Es": V[:, n_u:], "certified": bool(certified)}


def newton_polish(system, z0, m, tol=1e-13, max_iter=30, blowup=1e6):
    """Newton on F(z) = f^m(z) - z; returns (z, iterations, converged)."""
    z = np.asarray(z0, dtype=complex).copy()
    k = system.k
    for it in range(max_iter + 1):
        F = system.delta(iterate(system, z, m), z)
        if np.linalg.norm(F) <= tol * max(1.0, np.linalg.norm(z)):
            return z, it, True
        if it == max_iter:
            break
        P, logscale, _ = derivative_product(system, z, m)
        J = P * np.exp(logscale) - np.eye(k)
        try:
            dz = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return z, it, False
        z = z + dz
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > blowup:
            return z, it + 1, False
    return z, max_iter, False


def tangent_growth(data, i, m, z_lyap, B_inf, A_inf):
    """Per-step growth of tangent vectors of B_inf (unstable) and A_inf (stable) along the orbit of z."""
    sys_ = data.system
    u = np.array([1.0, B_inf.dphi(z_lyap[0])[0]])
    v = np.array([A_inf.dphi(z_lyap[1])[0], 1.0])
    zz = data.ambient(i, z_lyap)
    gu, gs = [], []
    for s in range(m):
        J = data.frame(i + s + 1).c_gamma_inv @ sys_.df(zz) @ data.frame(i + s).c_gamma
        u2, v2 = J @ u, J @ v
        gu.append(np.linalg.norm(u2) / np.linalg.norm(u))
        gs.append(np.linalg.norm(v2) / np.linalg.norm(v))
        u, v = u2, v2
        zz = sys_.f(zz)
    return np.array(gu), np.array(gs)


def budget_from_data(data, gamma0, eta=1e-3, r0=None, eps=1.0, delta_measure=0.1):
    sp = data.spectrum
    return ParameterBudget(gamma=data.gamma, gamma0=gamma0, h=data.h, chi_top=sp.chi_top, chi_u=sp.chi_u,
                           chi_s=sp.chi_s, eta=eta, delta_measure=delta_measure, eps=eps,
                           r0=float(data.r.min()) if r0 is None else r0)


def close_orbit(data, i, m, budget, cap=200, override=False, keep_lattice=True, chart_constant=1.0,
                cap_backward=None, residual_tol=RESIDUAL_TOL, polish_tol=POLISH_TOL):
    """Closing Lemma at the near-return (x_i, m): periodic point z with certificates.

    `cap` bounds the forward generations, `cap_backward` (default: cap) the backward ones.
    """
    if m < 1:
        raise ClosingError("degenerate near-return (m = 0)")
    report = validate_budget(budget)
    if not report["ok"] and not override:
        bad = [r["name"] for r in report["rows"] if not r["ok"]]
        raise ClosingError("budget fails: " + "; ".join(bad))
    w, sys_ = data.window, data.system
    if sys_.has_indeterminacy and sys_.dist_I(w.x(i)) < 1e-6:
        raise ClosingError("near-return on the indeterminacy set")
    gamma, g0 = data.gamma, budget.gamma0
    maps = _Maps(data)
    B, dB, _ = build_forward_family(data, i, m, cap, g0, maps)
    A, dA, _ = build_backward_family(data, i, m, cap if cap_backward is None else cap_backward, g0, maps)
    lat = GraphLattice(i, m, B, A, dB, dA)
    z_lyap = intersect_graphs(B[-1], A[-1])
    seq = [intersect_graphs(B[l], A[l + 1]) for l in range(min(len(A) - 1, len(B)))]
    z = data.ambient(i, z_lyap)
    resid = float(sys_.dist(iterate(sys_, z, m), z))
    shadow = np.empty(m + 1)
    zz = z.copy()
    for s in range(m + 1):
        shadow[s] = float(sys_.dist(zz, w.x(i + s)))
        zz = sys_.f(zz)
    eps = chart_constant * np.exp(2 * gamma) * 4 * data.h / budget.r0
    s = np.arange(m + 1)
    bound = eps * np.maximum(np.exp(-gamma * s), np.exp(-gamma * (m - s)))
    hyp = hyperbolicity_certificate(sys_, z, m, gamma, data.k1)
    zp, its, conv = newton_polish(sys_, z, m)
    polish = float(sys_.dist(zp, z)) if conv else np.inf
    gu, gs = tangent_growth(data, i, m, z_lyap, B[-1], A[-1])
    diag = {
        "generations": (len(B) - 1, len(A) - 1), "dB": dB, "dA": dA,
        "seq_steps": [float(np.linalg.norm(a - b)) for a, b in zip(seq[1:], seq[:-1])],
        "polish_iterations": its, "growth_u": gu, "growth_s": gs,
        "budget_ok": report["ok"], "override": bool(override and not report["ok"]),
        "cauchy_ok": lat.cauchy_ok(gamma),
    }
    ok = (resid <= residual_tol and bool(np.all(shadow <= bound)) and hyp["certified"]
          and polish <= polish_tol)
    cert = ClosingCertificate(i, m, z, resid, shadow, bound, float(eps), hyp["eigenvalues"], hyp["counts"],
                              hyp["Eu"], hyp["Es"], polish, dict(vars(budget)),
                              lat if keep_lattice else None, bool(ok), diag)
    return cert


def limit_graphs(data, i, m, B, A, n_samples=16, seed=0):
    """Last generations as limits, with invariance residual of A_inf under f^m and z on both."""
    B_inf, A_inf = B[-1], A[-1]
    rng = np.random.default_rng(seed)
    y = 0.9 * A_inf.alpha * np.sqrt(rng.uniform(0, 1, n_samples)) * np.exp(2j * np.pi * rng.uniform(0, 1, n_samples))
    pts = data.ambient(i, A_inf.point(y))
    img = iterate(data.system, pts, m)
    lc = data.lyap_coords(i, img)
    inv_res = float(np.max(np.abs(lc[:, 0] - A_inf.phi(lc[:, 1])[:, 0])))
    z = intersect_graphs(B_inf, A_inf)
    on_b = float(abs(z[1] - B_inf.phi(z[0])[0]))
    on_a = float(abs(z[0] - A_inf.phi(z[1])[0]))
    return B_inf, A_inf, {"invariance_residual": inv_res, "z_on_B": on_b, "z_on_A": on_a}
