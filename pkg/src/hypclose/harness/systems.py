"""Concrete maps: evaluators for f, Df, D^2 f, stable local differences, inverses and d(., I).

Every evaluator is batched: points have shape (..., k).  Torus systems are the
real torus R^k / Z^k embedded in C^k, with differences wrapped to [-1/2, 1/2).
"""

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..core import model_delta


class SystemSpecError(ValueError):
    """Raised for unknown kinds or failed self-tests."""


@dataclass(frozen=True)
class SystemSpec:
    kind: str
    params: dict
    k: int
    invertible: bool
    model: str
    f: Callable
    df: Callable
    d2f: Callable
    local_diff: Callable  # (x, v) -> f(x + v) - f(x), without cancellation
    dist_I: Callable
    inverse: Optional[Callable] = None
    preimage: Optional[Callable] = None  # (z, branch) -> one preimage
    n_branches: int = 1
    d2_const: float = 1.0  # bound on ||D^2 f|| away from I (feeds the Pesin constant)
    has_indeterminacy: bool = False
    info: dict = field(default_factory=dict)

    def delta(self, a, b):
        """Model-coordinate difference a - b."""
        return model_delta(np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex), self.model)

    def dist(self, a, b):
        return np.linalg.norm(self.delta(a, b), axis=-1)

    def describe(self):
        ps = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.kind} {ps}".strip()


def _fmt(v):
    if isinstance(v, complex):
        im = repr(v.imag)
        return f"{v.real!r}{'' if im.startswith('-') else '+'}{im}i"
    return repr(v) if isinstance(v, float) else str(v)


def _c(z):
    return np.asarray(z, dtype=complex)


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _mat(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(_c(a), _c(b), _c(c), _c(d))
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


def _ones(z):
    return np.ones(_c(z).shape[:-1])


def _wrap(z):
    z = _c(z)
    return np.mod(z.real, 1.0) + 1j * z.imag


# ---------------------------------------------------------------------------
# systems


def complex_henon(c=-1.0, b=0.3):
    """f(x, y) = (x^2 + c - b y, x)."""
    c, b = complex(c), complex(b)

    def f(z):
        z = _c(z)
        x, y = z[..., 0], z[..., 1]
        return _stack(x * x + c - b * y, x)

    def df(z):
        x = _c(z)[..., 0]
        return _mat(2 * x, -b * np.ones_like(x), np.ones_like(x), np.zeros_like(x))

    def d2f(z):
        z = _c(z)
        out = np.zeros(z.shape[:-1] + (2, 2, 2), dtype=complex)
        out[..., 0, 0, 0] = 2.0
        return out

    def local_diff(x, v):
        x, v = _c(x), _c(v)
        return _stack(2 * x[..., 0] * v[..., 0] + v[..., 0] ** 2 - b * v[..., 1], v[..., 0])

    def inverse(w):
        w = _c(w)
        u, v = w[..., 0], w[..., 1]
        return _stack(v, (v * v + c - u) / b)

    if b == 0:
        raise SystemSpecError("complex_henon needs b != 0 to be invertible")
    return SystemSpec("complex_henon", {"c": c, "b": b}, 2, True, "plane", f, df, d2f,
                      local_diff, _ones, inverse=inverse, d2_const=1.0)


def classical_henon(a=1.4, b=0.3):
    """f(x, y) = (1 - a x^2 + y, b x)."""
    a, b = float(a), float(b)

    def f(z):
        z = _c(z)
        x, y = z[..., 0], z[..., 1]
        return _stack(1 - a * x * x + y, b * x)

    def df(z):
        x = _c(z)[..., 0]
        return _mat(-2 * a * x, np.ones_like(x), b * np.ones_like(x), np.zeros_like(x))

    def d2f(z):
        z = _c(z)
        out = np.zeros(z.shape[:-1] + (2, 2, 2), dtype=complex)
        out[..., 0, 0, 0] = -2 * a
        return out

    def local_diff(x, v):
        x, v = _c(x), _c(v)
        return _stack(-2 * a * x[..., 0] * v[..., 0] - a * v[..., 0] ** 2 + v[..., 1], b * v[..., 0])

    def inverse(w):
        w = _c(w)
        u, v = w[..., 0], w[..., 1]
        x = v / b
        return _stack(x, u - 1 + a * x * x)

    return SystemSpec("classical_henon", {"a": a, "b": b}, 2, True, "plane", f, df, d2f,
                      local_diff, _ones, inverse=inverse, d2_const=abs(a))


def _linear_torus(kind, mat, params):
    mat = np.asarray(mat, dtype=float)
    k = mat.shape[0]
    minv = np.linalg.inv(mat)

    def f(z):
        return _wrap(_c(z) @ mat.T)

    def df(z):
        z = _c(z)
        return np.broadcast_to(mat.astype(complex), z.shape[:-1] + (k, k)).copy()

    def d2f(z):
        return np.zeros(_c(z).shape[:-1] + (k, k, k), dtype=complex)

    def local_diff(x, v):
        return _c(v) @ mat.T

    def inverse(w):
        return _wrap(_c(w) @ minv.T)

    return SystemSpec(kind, params, k, True, "torus", f, df, d2f, local_diff, _ones,
                      inverse=inverse, d2_const=0.0, info={"matrix": mat})


def cat_map():
    return _linear_torus("cat_map", [[2, 1], [1, 1]], {})


def doubling():
    """theta -> 2 theta mod 1 on the circle (k = 1, non-invertible, two branches)."""

    def f(z):
        return _wrap(2 * _c(z))

    def df(z):
        z = _c(z)
        return np.full(z.shape[:-1] + (1, 1), 2.0 + 0j)

    def d2f(z):
        return np.zeros(_c(z).shape[:-1] + (1, 1, 1), dtype=complex)

    def local_diff(x, v):
        return 2 * _c(v)

    def preimage(w, branch):
        return _wrap((_c(w) + branch) / 2)

    return SystemSpec("doubling", {}, 1, False, "torus", f, df, d2f, local_diff, _ones,
                      preimage=preimage, n_branches=2, d2_const=0.0)


def rotation(omega=(np.sqrt(5) - 1) / 2):
    """theta -> theta + omega mod 1 (zero entropy)."""
    omega = float(omega)

    def f(z):
        return _wrap(_c(z) + omega)

    def df(z):
        z = _c(z)
        return np.full(z.shape[:-1] + (1, 1), 1.0 + 0j)

    def d2f(z):
        return np.zeros(_c(z).shape[:-1] + (1, 1, 1), dtype=complex)

    def local_diff(x, v):
        return _c(v)

    def inverse(w):
        return _wrap(_c(w) - omega)

    return SystemSpec("rotation", {"omega": omega}, 1, True, "torus", f, df, d2f, local_diff,
                      _ones, inverse=inverse, d2_const=0.0)


def linear(diag=(2.0, 0.5)):
    """Constant diagonal linear map on C^k."""
    d = np.asarray(diag, dtype=complex)
    k = len(d)

    def f(z):
        return _c(z) * d

    def df(z):
        z = _c(z)
        return np.broadcast_to(np.diag(d), z.shape[:-1] + (k, k)).copy()

    def d2f(z):
        return np.zeros(_c(z).shape[:-1] + (k, k, k), dtype=complex)

    def local_diff(x, v):
        return _c(v) * d

    def inverse(w):
        return _c(w) / d

    params = {f"d{i}": complex(v) for i, v in enumerate(d)}
    return SystemSpec("linear", params, k, True, "plane", f, df, d2f, local_diff, _ones,
                      inverse=inverse, d2_const=0.0)


def meromorphic_yx():
    """f(x, y) = (y, y/x); I = {x = 0} in the working chart, d(., I) = min(1, |x|)."""

    def f(z):
        z = _c(z)
        x, y = z[..., 0], z[..., 1]
        return _stack(y, y / x)

    def df(z):
        z = _c(z)
        x, y = z[..., 0], z[..., 1]
        return _mat(np.zeros_like(x), np.ones_like(x), -y / x ** 2, 1 / x)

    def d2f(z):
        z = _c(z)
        x, y = z[..., 0], z[..., 1]
        out = np.zeros(z.shape[:-1] + (2, 2, 2), dtype=complex)
        out[..., 1, 0, 0] = 2 * y / x ** 3
        out[..., 1, 0, 1] = -1 / x ** 2
        out[..., 1, 1, 0] = -1 / x ** 2
        return out

    def local_diff(x, v):
        x, v = _c(x), _c(v)
        x0, y0 = x[..., 0], x[..., 1]
        v0, v1 = v[..., 0], v[..., 1]
        return _stack(v1, (v1 * x0 - y0 * v0) / (x0 * (x0 + v0)))

    def dist_I(z):
        return np.minimum(1.0, np.abs(_c(z)[..., 0]))

    def inverse(w):
        w = _c(w)
        u, v = w[..., 0], w[..., 1]
        return _stack(u / v, u)

    return SystemSpec("meromorphic_yx", {}, 2, True, "plane", f, df, d2f, local_diff, dist_I,
                      inverse=inverse, d2_const=2.0, has_indeterminacy=True)


BUILDERS = {
    "complex_henon": complex_henon,
    "classical_henon": classical_henon,
    "cat_map": cat_map,
    "doubling": doubling,
    "rotation": rotation,
    "linear": linear,
    "meromorphic_yx": meromorphic_yx,
}


# ---------------------------------------------------------------------------
# loading


def parse_number(text):
    t = text.strip().replace("i", "j")
    if "j" in t:
        return complex(t)
    return float(t)


def load_system(text, self_test=True, seed=0):
    """Build a system from 'kind key=value ...' text, e.g. 'complex_henon c=-1+0i b=0.3+0i'."""
    parts = text.split()
    if not parts:
        raise SystemSpecError("empty system spec")
    kind = parts[0]
    if kind not in BUILDERS:
        raise SystemSpecError(f"unknown kind {kind!r}")
    kw = {}
    for p in parts[1:]:
        m = re.fullmatch(r"([A-Za-z_]\w*)=(.+)", p)
        if not m:
            raise SystemSpecError(f"bad parameter {p!r}")
        key, val = m.group(1), m.group(2)
        if kind == "linear" and key == "diag":
            kw[key] = [parse_number(v) for v in val.split(",")]
        else:
            kw[key] = parse_number(val)
    try:
        sys_ = BUILDERS[kind](**kw)
    except TypeError as exc:
        raise SystemSpecError(f"bad parameters for {kind}: {exc}") from None
    if self_test:
        derivative_self_test(sys_, seed=seed)
    return sys_


def derivative_self_test(system, n=8, seed=0, tol=1e-6):
    """Compare Df and D^2 f against central differences at random points."""
    rng = np.random.default_rng(seed)
    k = system.k
    z = rng.uniform(0.2, 0.8, (n, k)) + 1j * rng.uniform(-0.3, 0.3, (n, k))
    if system.model == "torus":
        z = z.real + 0j
    eps = 1e-6
    jac = system.df(z)
    hess = system.d2f(z)
    for j in range(k):
        e = np.zeros(k, dtype=complex)
        e[j] = eps
        fd = (system.local_diff(z, e) - system.local_diff(z, -e)) / (2 * eps)
        err = np.linalg.norm(fd - jac[..., :, j], axis=-1)
        scale = np.maximum(1.0, np.linalg.norm(jac[..., :, j], axis=-1))
        if np.any(err > tol * scale):
            raise SystemSpecError(f"{system.kind}: derivative self-test failed (column {j})")
        fd2 = (system.df(z + e) - system.df(z - e))[..., :, :] / (2 * eps)
        err2 = np.linalg.norm(fd2 - hess[..., :, :, j], axis=(-2, -1))
        scale2 = np.maximum(1.0, np.linalg.norm(hess[..., :, :, j], axis=(-2, -1)))
        if np.any(err2 > tol * scale2):
            raise SystemSpecError(f"{system.kind}: second-derivative self-test failed")
    return True
