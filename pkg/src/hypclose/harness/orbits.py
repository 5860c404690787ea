"""Finite orbit windows standing in for points of the natural extension."""

from dataclasses import dataclass, field

import numpy as np

CONSISTENCY_TOL = 1e-10
INDET_TOL = 1e-6
DIVERGENCE = 1e8


class OrbitError(RuntimeError):
    def __init__(self, msg, index=None):
        super().__init__(msg if index is None else f"{msg} at index {index}")
        self.index = index


@dataclass(frozen=True)
class OrbitWindow:
    """Points x_{-L}, ..., x_M; row j of `points` holds x_{j-L}."""

    points: np.ndarray
    L: int
    M: int
    system: object
    backward_itinerary_id: str = "forward"
    forward_consistent: bool = True
    info: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return self.points.shape[0]

    @property
    def indices(self):
        return np.arange(-self.L, self.M + 1)

    def x(self, i):
        return self.points[i + self.L]

    def consistency(self):
        """Per-step defect ||f(x_i) - x_{i+1}|| scaled by max(1, ||x_{i+1}||)."""
        p = self.points
        d = self.system.dist(self.system.f(p[:-1]), p[1:])
        return d / np.maximum(1.0, np.linalg.norm(p[1:], axis=-1))


def _check_point(system, z, index):
    if not np.all(np.isfinite(z)) or np.linalg.norm(z) > DIVERGENCE:
        raise OrbitError("orbit diverges", index)
    if system.dist_I(z) < INDET_TOL:
        raise OrbitError("orbit enters the indeterminacy neighbourhood", index)


def _check_points(system, pts, L):
    with np.errstate(all="ignore"):
        bad = ~np.all(np.isfinite(pts), axis=1) | (np.linalg.norm(pts, axis=1) > DIVERGENCE)
        bad |= ~(system.dist_I(pts) >= INDET_TOL)
    if np.any(bad):
        j = int(np.nonzero(bad)[0][0])
        _check_point(system, pts[j], j - L)
        raise OrbitError("orbit leaves the admissible region", j - L)


def make_window(system, points, L, itinerary="given", check=True):
    points = np.asarray(points, dtype=complex)
    if points.ndim != 2 or points.shape[1] != system.k:
        raise ValueError("points must have shape (n, k)")
    M = points.shape[0] - 1 - L
    if M < 0 or L < 0:
        raise ValueError("bad window split")
    w = OrbitWindow(points, L, M, system, itinerary)
    if check:
        _check_points(system, points, L)
        bad = np.nonzero(w.consistency() > CONSISTENCY_TOL)[0]
        if len(bad):
            raise OrbitError("forward consistency violated", int(bad[0]) - L)
    return w


def generate_orbit(system, seed, M, L=0, transient=0, policy="forward", branches=None):
    """Orbit window around a seed.

    policy 'forward': the seed (after the transient) is x_{-L} and the window is
    filled by forward iteration; this is the stable choice for attractors.
    policy 'inverse': the seed is x_0; backward points come from the inverse
    map, or from preimage branches (`branches` is a sequence or a single
    branch index used at every step) for non-invertible maps.
    """
    z = np.asarray(seed, dtype=complex).reshape(system.k)
    _check_point(system, z, -L)
    for t in range(transient):
        z = system.f(z)
        _check_point(system, z, -L)
    n = L + M + 1
    pts = np.empty((n, system.k), dtype=complex)
    if policy == "forward":
        pts[0] = z
        with np.errstate(all="ignore"):
            for j in range(1, n):
                pts[j] = system.f(pts[j - 1])
        _check_points(system, pts, L)
        itinerary = "forward"
    elif policy == "inverse":
        pts[L] = z
        for j in range(L + 1, n):
            pts[j] = system.f(pts[j - 1])
            _check_point(system, pts[j], j - L)
        if system.invertible and system.inverse is not None:
            for j in range(L - 1, -1, -1):
                pts[j] = system.inverse(pts[j + 1])
                _check_point(system, pts[j], j - L)
            itinerary = "inverse"
        else:
            if system.preimage is None:
                raise OrbitError("no inverse or branch policy available")
            if branches is None:
                branches = 0
            seq = [branches] * L if np.isscalar(branches) else list(branches)
            if len(seq) < L:
                raise ValueError("branch sequence shorter than L")
            for s, j in enumerate(range(L - 1, -1, -1)):
                pts[j] = system.preimage(pts[j + 1], seq[s])
                _check_point(system, pts[j], j - L)
            itinerary = "branches:" + "".join(str(int(b)) for b in seq[:L])
    else:
        raise ValueError(f"unknown branch policy {policy!r}")
    return make_window(system, pts, L, itinerary)


def periodic_window(system, cycle, L, M, shift=0):
    """Window over a periodic cycle repeated, with x_0 = cycle[shift]."""
    cycle = np.asarray(cycle, dtype=complex)
    p = len(cycle)
    idx = (np.arange(-L, M + 1) + shift) % p
    return make_window(system, cycle[idx], L, itinerary=f"periodic:{p}")
