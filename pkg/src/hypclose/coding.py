"""Bernoulli coding: separated sets, entropy, recurrence harvesting, nested graph families and S_0.

Symbol conventions.  Members x_0, ..., x_{N-1} of a return family are the
symbols.  A vertical family is indexed by a future word (w_0, ..., w_{l-1}):
its graphs are T_{w_0} o ... o T_{w_{l-1}} applied to the seeds, where T_i
pulls a vertical graph at y back along the orbit segment of member i.  A
horizontal family is indexed by a past word (w_{-1}, ..., w_{-l}) and built
with the forward analogue F_i.  S_0(w) intersects the two, so that
f^n(S_0(w)) = S_0(sigma w) with (sigma w)_k = w_{k+1}.
"""

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cocycle import read_local_map
from .core import HORIZONTAL, VERTICAL, circle_nodes, constant_graph, graph_distance, intersect_graphs
from .graphtransform import (forward_bounds, frame_change, pull_back, push_forward, recenter,
                             recenter_bounds, validate_budget)

SHRINK = 1 - 1e-6  # keeps requested radii strictly inside the proven ones
NEST_TOL = 1e-9
ROUNDING = 1e-15


class CodingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# separated sets and entropy


def _orbit_dist(a, b, system):
    """Pointwise distances between orbit arrays (..., m, k)."""
    if system is None:
        return np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)
    return system.dist(a, b)


def bowen_orbits(points, m, system):
    """Array (P, m, k) of the first m iterates of each point."""
    z = np.asarray(points, dtype=complex)
    if z.ndim == 1:
        z = z[:, None]
    out = np.empty((z.shape[0], m, z.shape[1]), dtype=complex)
    with np.errstate(all="ignore"):
        for p in range(m):
            out[:, p] = z
            if p < m - 1:
                z = system.f(z)
    return out


def window_orbits(w, indices, m):
    """Bowen orbits read off an orbit window: rows i, ..., i + m - 1."""
    rows = np.asarray(indices) + w.L
    if rows.min() < 0 or rows.max() + m > len(w):
        raise IndexError("orbit segment leaves the window")
    return w.points[rows[:, None] + np.arange(m)[None, :]]


@dataclass
class SeparatedSet:
    indices: np.ndarray  # positions of the accepted candidates
    orbits: np.ndarray  # (n, m, k) Bowen orbits of the accepted points
    m: int
    eps: float
    min_separation: float
    n_candidates: int
    labels: np.ndarray = None  # optional caller ids (e.g. window indices)

    def __len__(self):
        return len(self.indices)

    @property
    def points(self):
        return self.orbits[:, 0]


def bowen_distance(o1, o2, system=None):
    return np.max(_orbit_dist(o1, o2, system), axis=-1)


def bowen_separated(orbits, eps, system=None, labels=None):
    """Greedy maximal (m, eps)-separated subset of candidates given by their Bowen orbits.

    Candidates are scanned in order; one is kept when its Bowen distance to
    every kept point is at least eps.  Every rejected candidate is therefore
    within eps of a kept one.
    """
    orb = np.asarray(orbits, dtype=complex)
    if orb.ndim == 2:
        orb = orb[:, :, None]
    P, m, k = orb.shape
    acc = np.empty_like(orb)
    keep = []
    for q in range(P):
        if keep:
            d = np.max(_orbit_dist(acc[:len(keep)], orb[q], system), axis=1)
            if d.min() < eps:
                continue
        acc[len(keep)] = orb[q]
        keep.append(q)
    acc = acc[:len(keep)]
    sep = np.inf
    for a in range(len(keep) - 1):
        sep = min(sep, float(np.max(_orbit_dist(acc[a + 1:], acc[a], system), axis=1).min()))
    lab = None if labels is None else np.asarray(labels)[keep]
    return SeparatedSet(np.array(keep, dtype=int), acc, m, float(eps), sep, P, lab)


def is_maximal(sep, orbits, system=None):
    """Every candidate lies within eps of the separated set in the Bowen metric."""
    orb = np.asarray(orbits, dtype=complex)
    if orb.ndim == 2:
        orb = orb[:, :, None]
    for q in range(orb.shape[0]):
        if np.max(_orbit_dist(sep.orbits, orb[q], system), axis=1).min() >= sep.eps and q not in sep.indices:
            return False
    return True


@dataclass
class EntropyEstimate:
    h: float
    slopes: dict
    residuals: dict
    counts: dict
    m_list: list
    warnings: list = field(default_factory=list)


def entropy_estimate(points, system, eps_list, m_list, orbits=None, min_samples=1000):
    """Slope of log card(separated set) against m, averaged over the eps list."""
    m_list = sorted(int(m) for m in m_list)
    if orbits is None:
        if len(points) < min_samples:
            raise ValueError(f"need at least {min_samples} samples")
        orbits = bowen_orbits(points, m_list[-1], system)
    elif orbits.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} samples")
    slopes, residuals, counts, warn = {}, {}, {}, []
    for eps in eps_list:
        c = [len(bowen_separated(orbits[:, :m], eps, system)) for m in m_list]
        counts[eps] = c
        if any(b < a for a, b in zip(c[:-1], c[1:])):
            warn.append(f"non-monotone counts at eps={eps}: {c}")
        if max(c) >= orbits.shape[0] // 2:
            warn.append(f"counts near the sample size at eps={eps}")
        coef, res, *_ = np.polyfit(m_list, np.log(c), 1, full=True)
        slopes[eps] = float(coef[0])
        residuals[eps] = float(np.sqrt(res[0] / len(m_list))) if len(res) else 0.0
    for msg in warn:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return EntropyEstimate(float(np.mean(list(slopes.values()))), slopes, residuals, counts, m_list, warn)


# ---------------------------------------------------------------------------
# recurrence harvesting


@dataclass
class ReturnFamily:
    window: object
    center: int  # window index of y
    n: int
    members: list  # window indices of x_0, ..., x_{N-1}
    eta: float
    distances: list  # (wd(x_i, y), wd(f^n x_i, y)) per member
    eps: float = None
    H: int = 8

    @property
    def N(self):
        return len(self.members)


def _window_distances(w, a, c, H):
    """Vectorised window distance between index arrays a and c (broadcast)."""
    a, c = np.broadcast_arrays(np.asarray(a), np.asarray(c))
    out = np.zeros(a.shape)
    for j in range(H + 1):
        ok = (a - j >= -w.L) & (c - j >= -w.L)
        d = w.system.dist(w.points[np.where(ok, a - j, 0) + w.L], w.points[np.where(ok, c - j, 0) + w.L])
        out = np.maximum(out, np.where(ok, d * 2.0 ** (-j), 0.0))
    return out


def _near_pairs(w, idx, eta):
    """For each index in idx, the indices in idx whose points are within eta."""
    pts = w.points[np.asarray(idx) + w.L]
    if w.system.model == "plane":
        tree = cKDTree(np.concatenate([pts.real, pts.imag], axis=1))
        return [np.asarray(idx)[np.array(nb, dtype=int)] for nb in tree.query_ball_point(
            np.concatenate([pts.real, pts.imag], axis=1), eta)]
    out = []
    for q in range(len(idx)):
        d = w.system.dist(pts, pts[q])
        out.append(np.asarray(idx)[d < eta])
    return out


def harvest_returns(separated, window, eta, n_range, H=8, max_members=None, margin=None):
    """Return time n and centre y maximising the number of separated points x with x, f^n x within eta of y.

    `separated.labels` must hold window indices.  Centres are drawn from the
    separated set; window distances use a history of H steps.
    """
    w = window
    idx = np.asarray(separated.labels if separated.labels is not None else separated.indices)
    margin = H if margin is None else margin
    n_list = list(n_range)
    lo, hi = -w.L + margin, w.M - max(n_list) - margin
    idx = idx[(idx >= lo) & (idx <= hi)]
    if len(idx) == 0:
        raise CodingError("no recurrence at this eta/n range")
    best = None
    for c, near in zip(idx, _near_pairs(w, idx, eta)):
        near = near[_window_distances(w, near, c, H) < eta]
        if len(near) == 0:
            continue
        d0 = _window_distances(w, near, c, H)
        for n in n_list:
            dn = _window_distances(w, near + n, c, H)
            sel = dn < eta
            cnt = int(sel.sum())
            if cnt == 0:
                continue
            score = (cnt, -n, -float(np.sum(np.maximum(d0[sel], dn[sel]))))
            if best is None or score > best[0]:
                best = (score, int(c), n, near[sel], d0[sel], dn[sel])
    if best is None:
        raise CodingError("no recurrence at this eta/n range")
    _, c, n, mem, d0, dn = best
    order = np.argsort(np.maximum(d0, dn), kind="stable")
    if max_members is not None:
        order = order[:max_members]
    order = order[np.argsort(mem[order], kind="stable")]
    return ReturnFamily(w, c, n, [int(v) for v in mem[order]], float(eta),
                        [(float(d0[o]), float(dn[o])) for o in order], separated.eps, H)


def returns_on_cycle(window, indices, period):
    """Family for points of one periodic orbit with n = period (exact returns)."""
    return ReturnFamily(window, int(indices[0]), int(period), [int(i) for i in indices], 0.0,
                        [(0.0, 0.0)] * len(indices))


# ---------------------------------------------------------------------------
# graph families


class _Steps:
    """The per-symbol transforms T_i (vertical) and F_i (horizontal) at the centre y."""

    def __init__(self, data, family, gamma0):
        self.data, self.family, self.gamma0 = data, family, gamma0
        self.y, self.n = family.center, family.n
        self.gamma = data.gamma
        self.cache = {}
        self.R = np.exp(self.gamma / 2) * self.hr(self.y)
        self.beta = np.exp(-self.gamma / 2) * self.hr(self.y)

    def hr(self, j):
        return self.data.h * self.data.radius(j)

    def g(self, j):
        if j not in self.cache:
            self.cache[j] = read_local_map(self.data, j)
        return self.cache[j]

    def change(self, src, dst):
        d = self.data
        return frame_change(d.frame(src), d.window.x(src), d.frame(dst), d.window.x(dst), d.system)

    def vertical(self, G, i):
        p = self.family.members[i]
        n, g0 = self.n, self.gamma0
        M, t = self.change(self.y, p + n)
        b = recenter_bounds(VERTICAL, M, t, G.alpha, G.offset_bound, G.lip_bound)
        R = min(1.25 * self.hr(p + n - 1), b["radius"]) * SHRINK
        G = recenter(G, M, t, R, g0, R)
        for s in range(n - 1, -1, -1):
            j = p + s
            cap = 1.25 * self.hr(j - 1) if s > 0 else 1.25 * self.hr(j)
            G = pull_back(G, self.g(j), self.gamma, gamma0=g0, beta=G.offset_bound,
                          radius=min(G.alpha * np.exp(2 * self.gamma), cap) * SHRINK)
        M, t = self.change(p, self.y)
        return recenter(G, M, t, self.R, g0, self.beta)

    def horizontal(self, G, i):
        p = self.family.members[i]
        n, g0 = self.n, self.gamma0
        M, t = self.change(self.y, p)
        b = recenter_bounds(HORIZONTAL, M, t, G.alpha, G.offset_bound, G.lip_bound)
        G = recenter(G, M, t, min(self.hr(p), b["radius"]) * SHRINK, g0, 1.25 * self.hr(p))
        for s in range(n):
            j = p + s
            g = self.g(j)
            cap = self.hr(j + 1) if s < n - 1 else 2 * self.hr(j + 1)
            G, _ = push_forward(G, g, radius=min(forward_bounds(G, g)[1], cap) * SHRINK)
        M, t = self.change(p + n, self.y)
        return recenter(G, M, t, self.R, g0, self.beta)


SEED_DIRECTIONS = (0.0, 1.0, -1.0, 1j, -1j)


@dataclass
class CodingTree:
    data: object
    family: ReturnFamily
    gamma0: float
    R: float  # seed domain radius e^{gamma/2} h r(y)
    beta: float  # seed offset bound e^{-gamma/2} h r(y)
    vertical: dict = field(default_factory=dict)  # future word -> list of graphs
    horizontal: dict = field(default_factory=dict)  # past word -> list of graphs
    diam_v: list = field(default_factory=list)
    diam_h: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.family.n

    @property
    def N(self):
        return self.family.N

    @property
    def y(self):
        return self.family.center

    @property
    def depth_v(self):
        return max((len(k) for k in self.vertical), default=0)

    @property
    def depth_h(self):
        return max((len(k) for k in self.horizontal), default=0)

    def decay_bound(self, level):
        g = self.data.gamma
        return 2 * self.data.h * np.exp(-2 * g * self.n * level + 2 * g * level)

    def truncation_bound(self, depth=None):
        depth = min(self.depth_v - 1, self.depth_h) if depth is None else depth
        return self.decay_bound(depth) / (1 - self.gamma0 ** 2)


def _family_diameter(graphs):
    if len(graphs) < 2:
        return 0.0
    return max(graph_distance(a, b) for a, b in itertools.combinations(graphs, 2))


def _check_budget(budget, data, override):
    report = validate_budget(budget)
    if abs(budget.gamma - data.gamma) > 1e-15 or abs(budget.h - data.h) > 1e-15:
        raise ValueError("budget gamma/h differ from the chart data")
    if not report["ok"] and not override:
        bad = [r["name"] for r in report["rows"] if not r["ok"]]
        raise CodingError("budget fails: " + "; ".join(bad))
    return report


def _new_tree(data, family, budget, tree):
    if tree is not None:
        return tree
    steps = _Steps(data, family, budget.gamma0)
    return CodingTree(data, family, budget.gamma0, steps.R, steps.beta)


def _build(tree, depth, orientation):
    steps = _Steps(tree.data, tree.family, tree.gamma0)
    seeds = [constant_graph([v * steps.beta], orientation, steps.R, 0.0, steps.beta) for v in SEED_DIRECTIONS]
    fam = {(): seeds}
    diam = [_family_diameter(seeds)]
    step = steps.vertical if orientation == VERTICAL else steps.horizontal
    for level in range(1, depth + 1):
        worst = 0.0
        for word in itertools.product(range(tree.N), repeat=level):
            try:
                fam[word] = [step(G, word[0]) for G in fam[word[1:]]]
            except Exception as exc:
                raise CodingError(f"{orientation} family {word}: {exc}") from exc
            worst = max(worst, _family_diameter(fam[word]))
        diam.append(worst)
    return fam, diam


def build_vertical_families(data, family, depth, budget, tree=None, override=False):
    """Vertical families A_w for all future words up to the given depth."""
    report = _check_budget(budget, data, override)
    tree = _new_tree(data, family, budget, tree)
    tree.vertical, tree.diam_v = _build(tree, depth, VERTICAL)
    tree.info["budget_ok"] = report["ok"]
    tree.info["override"] = bool(override and not report["ok"])
    return tree


def build_horizontal_families(data, family, depth, budget, tree=None, override=False):
    """Horizontal families B_w for all past words up to the given depth."""
    report = _check_budget(budget, data, override)
    tree = _new_tree(data, family, budget, tree)
    tree.horizontal, tree.diam_h = _build(tree, depth, HORIZONTAL)
    tree.info["budget_ok"] = report["ok"]
    tree.info["override"] = bool(override and not report["ok"])
    return tree


def build_coding_tree(data, family, depth, budget, override=False):
    """Vertical families to depth + 1 and horizontal families to depth (word window -depth..depth)."""
    tree = build_vertical_families(data, family, depth + 1, budget, override=override)
    return build_horizontal_families(data, family, depth, budget, tree=tree, override=override)


# ---------------------------------------------------------------------------
# family checks


def decay_report(tree):
    """Per-depth diameters against 2h e^{-2 gamma n l + 2 gamma l}, both halves."""
    rows = []
    for half, diam in (("vertical", tree.diam_v), ("horizontal", tree.diam_h)):
        for level, d in enumerate(diam):
            rows.append({"half": half, "depth": level, "diameter": d, "bound": tree.decay_bound(level),
                         "ok": bool(d <= tree.decay_bound(level))})
    return {"rows": rows, "ok": all(r["ok"] for r in rows)}


def nesting_report(tree, n_nodes=16):
    """A_{w_0..w_l} inside the region of A_{w_0..w_{l-1}}; depth 1 inside the seed box |X| <= beta."""
    t = circle_nodes(tree.R, n_nodes)
    worst = 0.0
    for word, graphs in tree.vertical.items():
        if len(word) == 0:
            continue
        vals = np.array([G.phi(t)[:, 0] for G in graphs])
        if len(word) == 1:
            worst = max(worst, float(np.max(np.abs(vals) - tree.beta)))
            continue
        par = np.array([G.phi(t)[:, 0] for G in tree.vertical[word[:-1]]])
        spread = np.max(np.abs(par - par[0]), axis=0)
        worst = max(worst, float(np.max(np.abs(vals - par[0]) - spread)))
    return {"max_excess": worst, "ok": bool(worst <= NEST_TOL)}


def _snap_orbit(tree, word, k, y_coord):
    """Ambient points of the f^n-orbit of the point at Y on graph k of A_word, kept on the families."""
    data, y = tree.data, tree.y
    pts = []
    G = tree.vertical[word][k]
    Y = np.asarray(y_coord, dtype=complex)
    for level in range(len(word) + 1):
        G = tree.vertical[word[level:]][k]
        pts.append(data.ambient(y, G.point(Y)))
        if level == len(word):
            break
        z = pts[-1]
        for _ in range(tree.n):
            z = data.system.f(z)
        Y = data.lyap_coords(y, z)[..., 1]
    return np.array(pts)


def shadow_report(tree, n_nodes=8):
    """Lemma 3.3 criterion: points of A_w follow member w_0 within eps/4 for n steps and land on A_{w[1:]}.

    Returns the worst shadow distance / (eps/4) and the worst landing residual;
    with members (n, eps)-separated this certifies pairwise disjointness.
    """
    data, fam, y, n = tree.data, tree.family, tree.y, tree.n
    eps = fam.eps if fam.eps is not None else np.inf
    Y = circle_nodes(tree.R * SHRINK, n_nodes)
    worst_shadow, worst_land = 0.0, 0.0
    for word, graphs in tree.vertical.items():
        if len(word) == 0:
            continue
        p = fam.members[word[0]]
        seg = np.array([data.window.x(p + s) for s in range(n)])
        child = tree.vertical[word[1:]]
        for k, G in enumerate(graphs):
            z = data.ambient(y, G.point(Y))
            for s in range(n):
                worst_shadow = max(worst_shadow, float(np.max(data.system.dist(z, seg[s]))))
                z = data.system.f(z)
            w2 = data.lyap_coords(y, z)
            if np.any(np.abs(w2[:, 1]) > child[k].alpha * (1 + 1e-9)):
                worst_land = np.inf
                continue
            worst_land = max(worst_land, float(np.max(np.abs(w2[:, 0] - child[k].phi(w2[:, 1])[:, 0]))))
    ratio = worst_shadow / (eps / 4) if np.isfinite(eps) else 0.0
    members_sep = _members_separation(tree)
    ok = ratio <= 1 and worst_land <= 1e-6 * max(1.0, tree.R) and (tree.N == 1 or members_sep >= eps)
    return {"shadow_ratio": ratio, "landing_residual": worst_land, "members_separation": members_sep,
            "disjoint": bool(ok)}


def _members_separation(tree):
    fam, w = tree.family, tree.data.window
    if fam.N < 2:
        return np.inf
    orb = window_orbits(w, np.array(fam.members), fam.n)
    sep = np.inf
    for a, b in itertools.combinations(range(fam.N), 2):
        sep = min(sep, float(bowen_distance(orb[a], orb[b], w.system)))
    return sep


def pairwise_family_distance(tree, orientation=VERTICAL, n_nodes=32):
    """Per depth: min over distinct families of min_t |phi_1(t) - phi_2(t)| (0 when unresolved in doubles)."""
    fams = tree.vertical if orientation == VERTICAL else tree.horizontal
    t = circle_nodes(tree.R * SHRINK, n_nodes)
    out = {}
    depth = max((len(k) for k in fams), default=0)
    for level in range(1, depth + 1):
        vals = {w: np.array([G.phi(t)[:, 0] for G in gs]) for w, gs in fams.items() if len(w) == level}
        best = np.inf
        for a, b in itertools.combinations(vals, 2):
            best = min(best, float(np.min(np.abs(vals[a][:, None, :] - vals[b][None, :, :]))))
        out[level] = best
    return out


def separation_report(tree, max_depth=3, n_nodes=4):
    """Points from distinct depth-l vertical families are (l+1, alpha)-separated under f^n."""
    data = tree.data
    ci = data.frame(tree.y).inv_norm()
    d1 = [w for w in tree.vertical if len(w) == 1]
    lip = max(G.lip_bound for w in d1 for G in tree.vertical[w])
    t = circle_nodes(tree.R * SHRINK, 32)
    m = np.inf
    for a, b in itertools.combinations(d1, 2):
        va = np.array([G.phi(t)[:, 0] for G in tree.vertical[a]])
        vb = np.array([G.phi(t)[:, 0] for G in tree.vertical[b]])
        m = min(m, float(np.min(np.abs(va[:, None] - vb[None]))))
    spread = max(tree.diam_v[1] if len(tree.diam_v) > 1 else 0.0, 0.0)
    alpha = max(m - 2 * spread, 0.0) / (1 + lip) / ci
    Y = circle_nodes(tree.R * 0.5, n_nodes, center=True)
    worst = np.inf
    for level in range(1, min(max_depth, tree.depth_v - 1) + 1):
        words = [w for w in tree.vertical if len(w) == level]
        orbits = {(w, k): _snap_orbit(tree, w, k, Y) for w in words for k in range(len(SEED_DIRECTIONS))}
        for (wa, ka), (wb, kb) in itertools.combinations(orbits, 2):
            if wa == wb:
                continue
            oa, ob = orbits[(wa, ka)][:level + 1], orbits[(wb, kb)][:level + 1]
            bowen = data.system.dist(oa[:, :, None, :], ob[:, None, :, :]).max(axis=0)
            worst = min(worst, float(bowen.min()))
    return {"alpha": alpha, "min_bowen": worst, "ok": bool(worst >= alpha)}


# ---------------------------------------------------------------------------
# coding map


def coding_point(tree, future, past, lyap=False):
    """S_0 on the word window: future = (w_0, ..., w_a), past = (w_{-1}, ..., w_{-b})."""
    future, past = tuple(int(s) for s in future), tuple(int(s) for s in past)
    if future not in tree.vertical or past not in tree.horizontal:
        raise KeyError("word deeper than the tree")
    z = intersect_graphs(tree.horizontal[past][0], tree.vertical[future][0])
    return z if lyap else tree.data.ambient(tree.y, z)


def split_word(word, depth):
    """Word array covering indices -depth..len-depth-1 -> (future, past) around index 0."""
    word = np.asarray(word)
    return tuple(word[depth:]), tuple(word[:depth][::-1])


def random_words(rng, N, count, depth, extra=1):
    """Uniform i.i.d. words on indices -depth .. depth + extra."""
    return rng.integers(0, N, size=(count, 2 * depth + 1 + extra))


def _fn_floor(tree, z):
    from .closing import derivative_product
    _, logscale, _ = derivative_product(tree.data.system, z, tree.n)
    return ROUNDING * max(1.0, float(np.linalg.norm(z))) * float(np.exp(logscale))


def check_semiconjugacy(tree, words):
    """max ||f^n(S_0(w)) - S_0(sigma w)|| over the words (each covering -Lw..Lw+1)."""
    Lw = tree.depth_h
    sys_ = tree.data.system
    worst, floor = 0.0, 0.0
    for w in words:
        fut, past = split_word(w[:-1], Lw)
        z = coding_point(tree, fut, past)
        fut2, past2 = split_word(w[1:], Lw)
        z2 = coding_point(tree, fut2, past2)
        img = z
        for _ in range(tree.n):
            img = sys_.f(img)
        worst = max(worst, float(sys_.dist(img, z2)))
        floor = max(floor, _fn_floor(tree, z))
    bound = tree.truncation_bound() * tree.data.frame(tree.y).norm()
    return {"residual": worst, "truncation_bound": bound, "rounding_floor": floor,
            "ok": bool(worst <= 10 * (bound + floor))}


def coding_continuity(tree, rng, pairs_per_depth=50, max_p=5):
    """Pairs agreeing on indices -p..p-1: ||S_0(w) - S_0(w')|| against ||C(y)|| 8h e^{-2 gamma n p + 2 gamma p}."""
    Lw = tree.depth_h
    cn = tree.data.frame(tree.y).norm()
    g, h, n = tree.data.gamma, tree.data.h, tree.n
    rows = []
    for p in range(0, min(max_p, Lw) + 1):
        worst = 0.0
        for _ in range(pairs_per_depth):
            w = rng.integers(0, tree.N, 2 * Lw + 1)
            w2 = w.copy()
            outside = np.ones(2 * Lw + 1, dtype=bool)
            outside[Lw - p:Lw + p] = False
            w2[outside] = rng.integers(0, tree.N, outside.sum())
            z1 = coding_point(tree, *split_word(w, Lw))
            z2 = coding_point(tree, *split_word(w2, Lw))
            worst = max(worst, float(tree.data.system.dist(z1, z2)))
        bound = cn * 8 * h * np.exp(-2 * g * n * p + 2 * g * p)
        rows.append({"p": p, "distance": worst, "bound": bound, "ratio": worst / bound})
    return {"rows": rows, "max_ratio": max(r["ratio"] for r in rows)}


def coded_orbits(tree, words, m):
    """Bowen orbits under f^n of coded points via the semiconjugacy: S_0(sigma^j w), j < m."""
    Lw = tree.depth_h
    out = np.empty((len(words), m, tree.data.system.k), dtype=complex)
    for q, w in enumerate(words):
        for j in range(m):
            out[q, j] = coding_point(tree, *split_word(w[j:j + 2 * Lw + 1], Lw))
    return out


def coded_entropy(tree, rng, n_words=1000, m_list=(1, 2, 3), eps=None):
    """Separated-set entropy (per iterate of f) of the coded set, from f^n Bowen orbits."""
    Lw = tree.depth_h
    words = rng.integers(0, tree.N, size=(n_words, 2 * Lw + 1 + max(m_list)))
    orb = coded_orbits(tree, words, max(m_list))
    if eps is None:
        eps = 0.5 * separation_report(tree, max_depth=0)["alpha"] if tree.N > 1 else 1.0
    est = entropy_estimate(None, tree.data.system, [eps], m_list, orbits=orb, min_samples=min(n_words, 1000))
    return {"h_fn": est.h, "h": est.h / tree.n, "target": np.log(tree.N) / tree.n, "eps": eps,
            "counts": est.counts[eps]}


@dataclass
class CodingResult:
    points: dict  # (future, past) -> ambient point
    semiconjugacy: dict
    continuity: dict
    measure: dict
    entropy: dict


def pushforward_stats(tree, phis, rng, n_words=10000, reference=None):
    """Monte-Carlo statistics of nu = (1/n) sum_l f^l_* (S_0)_* lambda_0 for test functions phi.

    `phis` maps names to vectorised functions of points (..., k).  The
    invariance defect is |E[phi(z) - phi(f^n z)]| / n with its standard error.
    """
    Lw = tree.depth_h
    sys_ = tree.data.system
    words = rng.integers(0, tree.N, size=(n_words, 2 * Lw + 1))
    z = np.array([coding_point(tree, *split_word(w, Lw)) for w in words])
    orbit = np.empty((tree.n + 1,) + z.shape, dtype=complex)
    orbit[0] = z
    for l in range(tree.n):
        orbit[l + 1] = sys_.f(orbit[l])
    out = {}
    for name, phi in phis.items():
        vals = np.real(phi(orbit))  # (n + 1, W)
        per_word = vals[:-1].mean(axis=0)
        defect = (vals[0] - vals[-1]) / tree.n
        se = float(defect.std(ddof=1) / np.sqrt(n_words)) if n_words > 1 else 0.0
        row = {"integral": float(per_word.mean()), "se": float(per_word.std(ddof=1) / np.sqrt(n_words))
               if n_words > 1 else 0.0, "defect": float(abs(defect.mean())), "defect_se": se}
        row["defect_ok"] = bool(row["defect"] <= max(2 * se, 1e-9))
        if reference is not None:
            row["birkhoff"] = float(np.mean(np.real(phi(reference))))
        out[name] = row
    return out


STANDARD_TESTS = {
    "re_x": lambda p: p[..., 0].real,
    "im_x": lambda p: p[..., 0].imag,
    "re_y": lambda p: p[..., 1].real,
}
