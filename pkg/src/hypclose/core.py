"""Complex linear algebra helpers, charts, split frames and Lipschitz graphs.

Graphs have a one-dimensional complex domain and vector values.  A horizontal
graph lives over the unstable factor (Y = phi(X)), a vertical one over the
stable factor (X = phi(Y)).  The function phi is stored as polynomial
coefficients in the rescaled variable u = t / alpha.
"""

from dataclasses import dataclass, field

import numpy as np

DEGREE = 16
N_CIRCLE = 64
N_LIP = 32
INV_TOL = 1e-10
OFFSET_TOL = 1e-12
LIP_TOL = 1e-9
DECAY_TOL = 1e-10
FIT_TOL = 1e-9

HORIZONTAL = "horizontal"
VERTICAL = "vertical"


class GraphError(ValueError):
    """Raised when a graph violates one of its invariants."""


# ---------------------------------------------------------------------------
# linear algebra


def as_cvec(v):
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise ValueError("expected a finite complex vector")
    return v


def as_cmat(m):
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or not np.all(np.isfinite(m)):
        raise ValueError("expected a finite complex matrix")
    return m


def opnorm(m):
    """Spectral norm; works on stacks of matrices."""
    m = np.asarray(m)
    if m.shape[-1] == 0 or m.shape[-2] == 0:
        return np.zeros(m.shape[:-2])
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


def checked_inverse(m):
    """Inverse with the residual check ||M M^-1 - I|| <= 1e-10."""
    m = as_cmat(m)
    inv = np.linalg.inv(m)
    eye = np.eye(m.shape[0])
    res = opnorm(m @ inv - eye)
    if not res <= INV_TOL:
        raise np.linalg.LinAlgError(f"inverse residual {res:.3e} exceeds {INV_TOL}")
    return inv


def vnorm(v, axis=-1):
    return np.linalg.norm(v, axis=axis)


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class Affine:
    """w -> M w + a."""

    matrix: np.ndarray
    shift: np.ndarray

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        return w @ self.matrix.T + self.shift

    def compose(self, other):
        """self after other."""
        return Affine(self.matrix @ other.matrix, self.matrix @ other.shift + self.shift)

    @property
    def is_translation(self):
        return np.allclose(self.matrix, np.eye(len(self.shift)), rtol=0, atol=0)


@dataclass(frozen=True)
class Chart:
    """Translation chart w -> base_point + w inside a model chart.

    model is 'plane' for C^k and 'torus' for the real torus R^k / Z^k embedded
    in C^k; on the torus, differences are wrapped to the fundamental domain.
    """

    base_point: np.ndarray
    radius: float = 1.0
    model: str = "plane"

    def __post_init__(self):
        object.__setattr__(self, "base_point", as_cvec(self.base_point))
        if not self.radius > 0:
            raise ValueError("chart radius must be positive")

    @property
    def offset(self):
        return self.base_point

    def to_model(self, w):
        return self.base_point + np.asarray(w, dtype=complex)

    def from_model(self, z):
        return model_delta(np.asarray(z, dtype=complex) - self.base_point, self.model)


def model_delta(d, model):
    if model == "torus":
        d = np.asarray(d, dtype=complex)
        re = d.real - np.round(d.real)
        return re + 1j * d.imag
    return d


def chart_transition(x, y):
    """Transition tau_x^{-1} tau_y between two translation charts."""
    if x.model != y.model or x.base_point.shape != y.base_point.shape:
        raise ValueError("chart mismatch")
    k = len(x.base_point)
    a = model_delta(y.base_point - x.base_point, x.model)
    return Affine(np.eye(k, dtype=complex), a)


# ---------------------------------------------------------------------------
# split frames


@dataclass(frozen=True)
class SplitFrame:
    """Columns of c_gamma span E_u (first k1) then E_s (last k2)."""

    c_gamma: np.ndarray
    c_gamma_inv: np.ndarray
    k1: int
    k2: int

    @classmethod
    def from_matrix(cls, c, k1):
        c = as_cmat(c)
        k = c.shape[0]
        if not 0 <= k1 <= k:
            raise ValueError("bad unstable dimension")
        return cls(c, checked_inverse(c), k1, k - k1)

    @property
    def k(self):
        return self.k1 + self.k2

    def norm(self):
        return opnorm(self.c_gamma)

    def inv_norm(self):
        return opnorm(self.c_gamma_inv)


# ---------------------------------------------------------------------------
# Lipschitz graphs


def circle_nodes(radius, n=N_CIRCLE, center=True):
    t = radius * np.exp(2j * np.pi * np.arange(n) / n)
    if center:
        t = np.concatenate([[0.0], t])
    return t


@dataclass(frozen=True)
class LipGraph:
    orientation: str
    alpha: float
    offset_bound: float
    lip_bound: float
    coeffs: np.ndarray  # shape (D+1, value_dim), coefficients in u = t/alpha
    info: dict = field(default_factory=dict, compare=False)

    @property
    def degree(self):
        return self.coeffs.shape[0] - 1

    @property
    def value_dim(self):
        return self.coeffs.shape[1]

    def phi(self, t):
        """Graph function at scalar or array of domain points; returns (..., value_dim)."""
        u = np.asarray(t, dtype=complex) / self.alpha
        out = np.zeros(u.shape + (self.value_dim,), dtype=complex)
        for c in self.coeffs[::-1]:
            out = out * u[..., None] + c
        return out

    def dphi(self, t):
        u = np.asarray(t, dtype=complex) / self.alpha
        d = self.coeffs[1:] * np.arange(1, self.degree + 1)[:, None]
        out = np.zeros(u.shape + (self.value_dim,), dtype=complex)
        for c in d[::-1]:
            out = out * u[..., None] + c
        return out / self.alpha

    def point(self, t):
        """Full point(s) in the product coordinates."""
        t = np.asarray(t, dtype=complex)
        v = self.phi(t)
        if self.orientation == HORIZONTAL:
            return np.concatenate([t[..., None], v], axis=-1)
        return np.concatenate([v, t[..., None]], axis=-1)

    def measured_offset(self):
        return float(vnorm(self.coeffs[0]))

    def measured_lip(self):
        t = circle_nodes(self.alpha, N_LIP, center=False)
        return float(np.max(vnorm(self.dphi(t))))

    def sup_norm(self):
        return float(np.max(vnorm(self.phi(circle_nodes(self.alpha)))))


def check_graph(g, scale=None):
    """Verify the offset, Lipschitz and resolution invariants."""
    off = g.measured_offset()
    if off > g.offset_bound + OFFSET_TOL:
        raise GraphError(f"offset exceeded: {off:.3e} > {g.offset_bound:.3e}")
    lip = g.measured_lip()
    if lip > g.lip_bound + LIP_TOL:
        raise GraphError(f"lip exceeded: {lip:.3e} > {g.lip_bound:.3e}")
    mags = vnorm(g.coeffs)
    floor = max(float(mags.max()), g.alpha if scale is None else scale)
    if mags[-1] > DECAY_TOL * floor:
        raise GraphError(f"underresolved: last coefficient {mags[-1]:.3e}")
    return g


def fit_graph(t, values, orientation, alpha, lip_bound, offset_bound,
              degree=DEGREE, scale=None, info=None):
    """Least-squares polynomial fit of samples (t_j, values_j) over the disk of radius alpha."""
    if orientation not in (HORIZONTAL, VERTICAL):
        raise ValueError(f"unknown orientation {orientation!r}")
    if not alpha > 0:
        raise ValueError("domain radius must be positive")
    if not 0 <= lip_bound < 1:
        raise GraphError("lip bound must lie in [0, 1)")
    t = np.asarray(t, dtype=complex).ravel()
    values = np.asarray(values, dtype=complex)
    if values.ndim == 1:
        values = values[:, None]
    if len(t) < degree + 1:
        raise ValueError("need at least degree+1 samples")
    if np.max(np.abs(t)) > alpha * (1 + 1e-12):
        raise ValueError("samples outside the domain disk")
    u = t / alpha
    vander = u[:, None] ** np.arange(degree + 1)
    coeffs, *_ = np.linalg.lstsq(vander, values, rcond=None)
    resid = np.max(np.abs(vander @ coeffs - values))
    vmax = float(np.max(np.abs(values)))
    if resid > FIT_TOL * max(1.0, vmax):
        raise GraphError(f"fit residual {resid:.3e}")
    g = LipGraph(orientation, float(alpha), float(offset_bound), float(lip_bound),
                 coeffs, dict(info or {}, fit_residual=float(resid)))
    return check_graph(g, scale)


def graph_from_function(func, orientation, alpha, lip_bound, offset_bound, **kw):
    t = circle_nodes(alpha)
    return fit_graph(t, func(t), orientation, alpha, lip_bound, offset_bound, **kw)


def constant_graph(value, orientation, alpha, lip_bound=0.0, offset_bound=None, degree=DEGREE):
    value = np.atleast_1d(np.asarray(value, dtype=complex))
    coeffs = np.zeros((degree + 1, len(value)), dtype=complex)
    coeffs[0] = value
    ob = float(vnorm(value)) if offset_bound is None else offset_bound
    return check_graph(LipGraph(orientation, float(alpha), ob, float(lip_bound), coeffs))


def eval_graph(g, t):
    t = np.asarray(t, dtype=complex)
    if np.any(np.abs(t) > g.alpha * (1 + 1e-12)):
        raise ValueError("domain error: point outside the graph domain")
    return g.point(t)


def graph_distance(g1, g2):
    """Sup distance over the common disk (64 boundary nodes plus center)."""
    if g1.orientation != g2.orientation:
        raise ValueError("orientation mismatch")
    t = circle_nodes(min(g1.alpha, g2.alpha))
    return float(np.max(vnorm(g1.phi(t) - g2.phi(t))))


def intersect_graphs(h, v, tol=1e-12, max_iter=10000):
    """Unique point of a horizontal and a vertical graph (fixed point of Y -> phi_H(phi_V(Y)))."""
    if h.orientation != HORIZONTAL or v.orientation != VERTICAL:
        raise ValueError("need a horizontal and a vertical graph")
    if h.value_dim != 1 or v.value_dim != 1:
        raise ValueError("intersection implemented for k1 = k2 = 1")
    if not h.lip_bound * v.lip_bound < 1:
        raise ValueError("Lipschitz product must be below 1")
    scale = max(h.alpha, v.alpha)
    y = h.phi(0.0)[0]
    for _ in range(max_iter):
        x = v.phi(y)[0]
        y_new = h.phi(x)[0]
        if abs(y_new - y) <= tol * scale:
            y = y_new
            break
        y = y_new
    else:
        raise RuntimeError("intersection did not converge")
    x = v.phi(y)[0]
    if abs(x) > h.alpha * (1 + 1e-9) or abs(y) > v.alpha * (1 + 1e-9):
        raise GraphError("intersection escapes")
    return np.array([x, y])
