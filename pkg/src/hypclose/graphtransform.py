"""Forward and backward graph transforms, recentering, cut-off and the parameter budget."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (HORIZONTAL, VERTICAL, GraphError, circle_nodes, fit_graph, opnorm)

NEWTON_TOL = 1e-12
INCLUSION_TOL = 1e-9


class TransformError(RuntimeError):
    pass


class FramesTooFar(TransformError):
    pass


# ---------------------------------------------------------------------------
# local maps


@dataclass
class LocalMapData:
    """g(X, Y) = (A X + R(X, Y), B Y + U(X, Y)) on the ball of radius R0."""

    A: np.ndarray
    B: np.ndarray
    g: Callable
    dg: Callable
    R0: float
    delta_nl: float
    d2_bound: float
    k1: int
    index: int = 0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=complex))
        if not self.norm_B < self.conorm_A:
            raise ValueError("need ||B|| < ||A^-1||^-1")

    @property
    def k(self):
        return self.A.shape[0] + self.B.shape[0]

    @property
    def A_inv(self):
        return np.linalg.inv(self.A)

    @property
    def norm_A_inv(self):
        return float(opnorm(self.A_inv))

    @property
    def conorm_A(self):
        return 1.0 / float(opnorm(np.linalg.inv(self.A)))

    @property
    def norm_B(self):
        return float(opnorm(self.B))

    @property
    def xi(self):
        return 1.0 - self.norm_B * self.norm_A_inv

    @property
    def linear(self):
        lin = np.zeros((self.k, self.k), dtype=complex)
        lin[:self.k1, :self.k1] = self.A
        lin[self.k1:, self.k1:] = self.B
        return lin

    @property
    def g0(self):
        """||g(0)||: zero in exact arithmetic, the orbit defect in practice."""
        if "g0" not in self.info:
            self.info["g0"] = float(np.linalg.norm(self.g(np.zeros((1, self.k)))))
        return self.info["g0"]

    def remainder(self, w):
        """(R, U) = g - Dg(0) evaluated at rows of w."""
        w = np.asarray(w, dtype=complex)
        return self.g(w) - w @ self.linear.T


def sphere_points(rng, n, k):
    v = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sampled_delta(dg, lin, k1, R0, n_samples=64, seed=0):
    """max(||DR||, ||DU||) sampled on the sphere of radius R0 (and the coordinate axes)."""
    k = lin.shape[0]
    rng = np.random.default_rng(seed)
    v = np.concatenate([sphere_points(rng, n_samples, k), np.eye(k), -np.eye(k)]) * R0
    dr = dg(v) - lin
    return float(max(np.max(opnorm(dr[:, :k1, :])), np.max(opnorm(dr[:, k1:, :]))))


def quadratic_local_map(A, B, Q, R0, n_samples=64, seed=0, index=0):
    """Synthetic g(w) = L w + Q(w, w) with a symmetric tensor Q[a, b, c]."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    k1 = A.shape[0]
    k = k1 + B.shape[0]
    Q = np.asarray(Q, dtype=complex).reshape(k, k, k)
    Q = 0.5 * (Q + Q.transpose(0, 2, 1))
    lin = np.zeros((k, k), dtype=complex)
    lin[:k1, :k1], lin[k1:, k1:] = A, B

    def g(w):
        w = np.asarray(w, dtype=complex)
        return w @ lin.T + np.einsum("abc,...b,...c->...a", Q, w, w)

    def dg(w):
        w = np.asarray(w, dtype=complex)
        return lin + 2 * np.einsum("abc,...c->...ab", Q, w)

    delta = sampled_delta(dg, lin, k1, R0, n_samples, seed)
    d2 = 2 * float(np.sqrt(np.sum(np.abs(Q) ** 2)))
    return LocalMapData(A, B, g, dg, R0, delta, d2, k1, index=index)


def linear_local_map(A, B, R0=1.0):
    k = len(np.atleast_2d(A)) + len(np.atleast_2d(B))
    return quadratic_local_map(A, B, np.zeros((k, k, k)), R0)


# ---------------------------------------------------------------------------
# parameter budget


@dataclass(frozen=True)
class ParameterBudget:
    gamma: float
    gamma0: float
    h: float
    chi_top: float
    chi_u: float
    chi_s: float
    eta: float = 1e-3
    delta_measure: float = 0.1
    eps: float = 1.0
    r0: float = 1e-3

    def effective_chi_s(self):
        return -5 * self.gamma if np.isneginf(self.chi_s) else self.chi_s


def _ineq(name, lhs, rhs, strict=True):
    ok = lhs < rhs if strict else lhs <= rhs
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs), "margin": float(rhs - lhs), "ok": bool(ok)}


def validate_budget(p):
    """Evaluate every smallness condition with delta := 5h; overall pass iff all hold."""
    g, g0, h = p.gamma, p.gamma0, p.h
    cu, cs, c1 = p.chi_u, p.effective_chi_s(), p.chi_top
    e = np.exp
    nB, conA = e(cs + g), e(cu - g)  # ||B|| and ||A^-1||^-1 implied by the Lyapunov blocks
    d = 5 * h
    xi = 1 - nB / conA
    rows = [
        _ineq("4g < chi_u - chi_s", 4 * g, cu - cs),
        _ineq("g0 < 1/5", g0, 0.2),
        _ineq("g0 < e^{g/4} - 1", g0, e(g / 4) - 1),
        _ineq("g0 < 1 - e^{-g/2}", g0, 1 - e(-g / 2)),
        _ineq("g0 e^{chi_1+g} + e^{-4g} < e^{-7g/2}", g0 * e(c1 + g) + e(-4 * g), e(-3.5 * g)),
        _ineq("e^{chi_u-g} >= e^{4g}", e(4 * g), e(cu - g), strict=False),
        _ineq("e^{chi_s+g} <= e^{-4g}", e(cs + g), e(-4 * g), strict=False),
        _ineq("2 * 5h e^{-chi_u+g} < 1", 10 * h * e(-cu + g), 1.0),
        _ineq("(g0 e^{chi_s+g} + 6h)/(e^{chi_u-g} - 6h) <= e^{-g} g0",
              (g0 * nB + 6 * h) / (conA - 6 * h), e(-g) * g0, strict=False),
        _ineq("e^{4g} - 11h > e^{2g}", e(2 * g), e(4 * g) - 11 * h),
        _ineq("e^{g/2}(e^{-4g} + 5h + h) <= e^{-2g}", e(g / 2) * (e(-4 * g) + 6 * h), e(-2 * g), strict=False),
    ]
    rows += backward_hypotheses(nB, conA, xi, d, g, g0)
    return {"rows": rows, "ok": all(r["ok"] for r in rows), "delta": d}


def backward_hypotheses(norm_B, conorm_A, xi, delta, gamma, gamma0):
    """The hypotheses of the non-invertible backward graph transform."""
    e = np.exp
    d1 = delta * (1 + gamma0)
    return [
        _ineq("g0(1-xi) + 2 d(1+g0)||A^-1|| <= 1", gamma0 * (1 - xi) + 2 * d1 / conorm_A, 1.0, strict=False),
        _ineq("(g0||B|| + d(1+g0))/(||A^-1||^-1 - d(1+g0)) <= e^{-g} g0",
              (gamma0 * norm_B + d1) / (conorm_A - d1), e(-gamma) * gamma0, strict=False),
        _ineq("(||B|| + 2d)e^{2g} + d <= 1", (norm_B + 2 * delta) * e(2 * gamma) + delta, 1.0, strict=False),
        _ineq("d(1+g0) <= (||A^-1||^-1 - g0||B||)/2", d1, (conorm_A - gamma0 * norm_B) / 2, strict=False),
        _ineq("d(1+g0) <= ||A^-1||^-1 - e^{2g}", d1, conorm_A - e(2 * gamma), strict=False),
        _ineq("e^{2g} < 3/2", e(2 * gamma), 1.5),
    ]


def format_budget(report):
    lines = []
    for r in report["rows"]:
        lines.append(f"{'PASS' if r['ok'] else 'FAIL'}  {r['name']}  lhs={r['lhs']:.6g} rhs={r['rhs']:.6g}")
    lines.append(f"overall: {'PASS' if report['ok'] else 'FAIL'}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# transforms


def newton_batch(F, dF, x, tol, max_iter=60):
    """Damped Newton on independent scalar equations, run until the residual stagnates below tol."""
    f = F(x)
    r = np.abs(f)
    for _ in range(max_iter):
        if r.max() <= 1e-3 * tol:
            break
        step = f / dF(x)
        lam = np.ones(len(x))
        trial = x - step
        ft = F(trial)
        rt = np.abs(ft)
        worse = rt > r + 1e-3 * tol
        while np.any(worse) and lam.min() > 1e-6:
            lam = np.where(worse, 0.5 * lam, lam)
            trial = x - lam * step
            ft = F(trial)
            rt = np.abs(ft)
            worse = rt > r + 1e-3 * tol
        stalled = rt.max() > 0.5 * r.max()
        x, f, r = trial, ft, rt
        if stalled and r.max() <= tol:
            break
    return x


def _graph_ball_radius(G):
    t = circle_nodes(G.alpha)
    return float(np.max(np.linalg.norm(G.point(t), axis=-1)))


def forward_bounds(G, g):
    """Theorem values (lip, domain radius, offset) for the image of G under g."""
    lip0, beta, alpha = G.lip_bound, G.offset_bound, G.alpha
    d1 = g.delta_nl * (1 + lip0)
    con = g.conorm_A
    lip = (g.norm_B * lip0 + d1) / (con - d1)
    radius = (con - d1) * alpha - g.delta_nl * beta
    offset = (1 + lip0) * (g.norm_B * beta + g.delta_nl * beta + g.d2_bound * beta ** 2)
    # rounding slack: g(0) is the orbit defect, not exactly zero
    offset += 2 * (1 + lip0) * g.g0
    return lip, radius, offset


def push_forward(G, g, radius=None, max_iter=60):
    """Image of a horizontal graph under g, as a horizontal graph over a disk of the given radius.

    Returns (graph, theorem_radius).  Without `radius` the theorem's radius is used.
    """
    if G.orientation != HORIZONTAL:
        raise ValueError("push_forward needs a horizontal graph")
    if g.k1 != 1:
        raise NotImplementedError("graph transforms are implemented for k1 = 1")
    if not g.delta_nl * g.norm_A_inv * (1 + G.lip_bound) < 1:
        raise TransformError("precondition delta ||A^-1|| (1 + lip) < 1 fails")
    if _graph_ball_radius(G) > g.R0 * (1 + 1e-9):
        raise TransformError("graph does not fit in the local map's ball")
    lip, theorem_radius, offset = forward_bounds(G, g)
    target = theorem_radius if radius is None else float(radius)
    if not target > 0:
        raise TransformError("empty target domain")
    xp = circle_nodes(target)

    def F(x):
        return g.g(G.point(x))[:, 0] - xp

    def dF(x):
        J = g.dg(G.point(x))
        return J[:, 0, 0] + np.sum(J[:, 0, 1:] * G.dphi(x), axis=-1)

    x = newton_batch(F, dF, xp / g.A[0, 0], NEWTON_TOL * target, max_iter)
    pts = G.point(x)
    img = g.g(pts)
    resid = float(np.max(np.abs(img[:, 0] - xp)))
    if resid > NEWTON_TOL * target or not np.all(np.isfinite(x)):
        raise TransformError(f"graph fold: Newton residual {resid:.2e}")
    if np.max(np.abs(x)) > G.alpha * (1 + 1e-12):
        raise TransformError("graph fold: preimage leaves the graph domain")
    out = fit_graph(xp, img[:, 1:], HORIZONTAL, target, lip, offset,
                    info={"theorem_radius": theorem_radius, "newton_residual": resid})
    return out, theorem_radius


def pull_back(G, g, gamma, gamma0=None, beta=None, radius=None, max_iter=500, check_inclusion=True):
    """Vertical graph psi over B(0, alpha e^{2 gamma}) with g(graph psi) inside graph phi."""
    if G.orientation != VERTICAL:
        raise ValueError("pull_back needs a vertical graph")
    if g.k1 != 1:
        raise NotImplementedError("graph transforms are implemented for k1 = 1")
    gamma0 = G.lip_bound if gamma0 is None else gamma0
    beta = G.offset_bound if beta is None else beta
    alpha = G.alpha
    hyp = backward_hypotheses(g.norm_B, g.conorm_A, g.xi, g.delta_nl, gamma, gamma0)
    bad = [r["name"] for r in hyp if not r["ok"]]
    if G.lip_bound > gamma0 + 1e-15:
        bad.append("Lip(phi) <= g0")
    if G.measured_offset() > beta + 1e-12:
        bad.append("||phi(0)|| <= beta")
    if not (beta <= alpha * (1 + 1e-12) and alpha <= g.R0 / 4 * (1 + 1e-12)):
        bad.append("beta <= alpha <= R0/4")
    if bad:
        raise TransformError("precondition: " + "; ".join(bad))
    full = alpha * np.exp(2 * gamma)
    out_r = full if radius is None else float(radius)
    if out_r > full * (1 + 1e-12):
        raise TransformError("requested radius exceeds alpha e^{2 gamma}")
    y = circle_nodes(out_r)
    slack = 2 * g.g0 * g.norm_A_inv  # orbit defect, zero in exact arithmetic
    trap = np.abs(y) + beta * np.exp(-2 * gamma) + slack + 1e-14 * out_r  # last term: rounding floor
    ainv = 1.0 / g.A[0, 0]
    a = g.A[0, 0]
    x = np.zeros_like(y)
    prev_step, stalled = np.inf, 0
    for _ in range(max_iter):
        pts = np.stack([x, y], axis=-1)
        img = g.g(pts)
        if np.any(np.abs(img[:, 1]) > alpha * (1 + 1e-12)):
            raise TransformError("hypotheses violated: g_2 leaves the graph domain")
        x_new = ainv * (G.phi(img[:, 1])[:, 0] - (img[:, 0] - a * x))
        if np.any(np.abs(x_new) > trap * (1 + 1e-12)):
            raise TransformError("hypotheses violated: iterate leaves the trapping set")
        step = float(np.max(np.abs(x_new - x)))
        # the step stops shrinking once it reaches rounding level
        stalled = stalled + 1 if step >= 0.5 * prev_step else 0
        done = step <= 1e-4 * NEWTON_TOL * out_r or (stalled >= 3 and step <= NEWTON_TOL * out_r)
        prev_step = step
        x = x_new
        if done:
            break
    else:
        raise TransformError("backward fixed point did not converge")
    out = fit_graph(y, x, VERTICAL, out_r, np.exp(-gamma) * gamma0, beta * np.exp(-2 * gamma) + slack)
    if check_inclusion:
        res = inclusion_residual(out, G, g)
        out.info["inclusion_residual"] = res
        if res > INCLUSION_TOL * min(1.0, alpha):
            raise TransformError(f"inclusion residual {res:.2e}")
    return out


def inclusion_residual(psi, phi, g, n=16, seed=0):
    """max over sample Y of dist(g(psi(Y), Y), graph phi) measured along X."""
    rng = np.random.default_rng(seed)
    y = psi.alpha * np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * np.pi * rng.uniform(0, 1, n))
    img = g.g(psi.point(y))
    return float(np.max(np.abs(img[:, 0] - phi.phi(img[:, 1])[:, 0])))


def cutoff(G, new_radius):
    """Restriction to a smaller disk, refit there; declared bounds unchanged."""
    if new_radius > G.alpha * (1 + 1e-12):
        raise ValueError("cutoff radius exceeds the domain")
    if new_radius >= G.alpha:
        return G
    t = circle_nodes(new_radius)
    return fit_graph(t, G.phi(t), G.orientation, new_radius, G.lip_bound, G.offset_bound,
                     info=dict(G.info, cutoff_from=G.alpha))


# ---------------------------------------------------------------------------
# recentering


def frame_change(src_frame, src_base, dst_frame, dst_base, system=None):
    """Affine map (M, t) from source Lyapunov coordinates to destination ones."""
    M = dst_frame.c_gamma_inv @ src_frame.c_gamma
    diff = np.asarray(src_base, dtype=complex) - np.asarray(dst_base, dtype=complex)
    if system is not None:
        diff = system.delta(src_base, dst_base)
    t = dst_frame.c_gamma_inv @ diff
    return M, t


def recenter_bounds(orientation, M, t, alpha, beta, lip):
    """Image bounds of a graph under w -> M w + t (scalar Lemma 3.2 arithmetic)."""
    if orientation == HORIZONTAL:
        a, b, c, d = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
        tu, tv = t[0], t[1]
    else:
        a, b, c, d = M[1, 1], M[1, 0], M[0, 1], M[0, 0]
        tu, tv = t[1], t[0]
    a, b, c, d, tu, tv = (abs(v) for v in (a, b, c, d, tu, tv))
    den = a - b * lip
    if den <= 0:
        return {"lip": np.inf, "radius": 0.0, "offset": np.inf}
    u0 = (b * beta + tu) / den
    return {"lip": (c + d * lip) / den, "radius": den * alpha - b * beta - tu,
            "offset": c * u0 + d * (beta + lip * u0) + tv}


def recenter(G, M, t, radius, lip_target, offset_target, max_iter=60):
    """Image of G under w -> M w + t, as a graph of the same orientation over B(0, radius).

    Raises FramesTooFar when the affine image is not guaranteed to be a graph
    over that disk with the requested Lipschitz and offset bounds.
    """
    M = np.asarray(M, dtype=complex)
    t = np.asarray(t, dtype=complex)
    bounds = recenter_bounds(G.orientation, M, t, G.alpha, G.offset_bound, G.lip_bound)
    fails = []
    if bounds["radius"] < radius * (1 - 1e-12):
        fails.append(f"domain {bounds['radius']:.3e} < {radius:.3e}")
    if bounds["lip"] > lip_target * (1 + 1e-12):
        fails.append(f"lip {bounds['lip']:.3e} > {lip_target:.3e}")
    if bounds["offset"] > offset_target * (1 + 1e-12):
        fails.append(f"offset {bounds['offset']:.3e} > {offset_target:.3e}")
    if fails:
        raise FramesTooFar("frames too far: " + "; ".join(fails))
    if G.orientation == HORIZONTAL:
        dom, val = 0, 1
    else:
        dom, val = 1, 0
    tp = circle_nodes(radius)
    a, b = M[dom, dom], M[dom, val]

    def F(u):
        return G.point(u) @ M[dom] + t[dom] - tp

    u = newton_batch(F, lambda u: a + b * G.dphi(u)[:, 0],
                     (tp - t[dom] - b * G.phi(0.0)[0]) / a, NEWTON_TOL * radius, max_iter)
    pts = G.point(u)
    F = pts @ M[dom] + t[dom] - tp
    resid = float(np.max(np.abs(F)))
    if resid > NEWTON_TOL * radius or np.max(np.abs(u)) > G.alpha * (1 + 1e-12):
        raise TransformError(f"recenter solve failed (residual {resid:.2e})")
    vals = pts @ M[val] + t[val]
    info = {"eps_eta": float(opnorm(M - np.eye(2))), "translation": float(np.linalg.norm(t)),
            "bounds": bounds}
    return fit_graph(tp, vals, G.orientation, radius, min(bounds["lip"], lip_target),
                     min(bounds["offset"], offset_target), info=info)
