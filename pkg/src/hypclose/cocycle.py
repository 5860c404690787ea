"""Finite-time Oseledets data: exponents, splitting, Lyapunov basis, Pesin radius, local maps."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import SplitFrame, opnorm
from .graphtransform import LocalMapData

SINGULAR_COND = 1e15
RHO_OVERFLOW = 1e200
BLOCK_SLACK = 1.05
R_COLLAPSE = 1e-12
BURN_IN = 200


class ChartCollapse(RuntimeError):
    pass


class SplittingDegenerate(RuntimeError):
    pass


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: np.ndarray
    m0: int
    gap: float
    length: int
    skipped: int = 0

    @property
    def chi_u(self):
        return float(self.exponents[self.m0 - 1])

    @property
    def chi_s(self):
        return float(self.exponents[self.m0])

    @property
    def chi_top(self):
        return float(self.exponents[0])


@dataclass(frozen=True)
class Splitting:
    Eu: np.ndarray  # (n, k, k1) orthonormal columns
    Es: np.ndarray  # (n, k, k2)
    invariance_residual: float
    min_angle: float


@dataclass
class LyapunovFrames:
    frames: list
    rho_u: np.ndarray
    rho_s: np.ndarray
    blocks_u: np.ndarray  # per-step (min, max) singular values of the unstable block
    blocks_s: np.ndarray
    warnings: list = field(default_factory=list)

    def __getitem__(self, j):
        return self.frames[j]

    def __len__(self):
        return len(self.frames)


# ---------------------------------------------------------------------------
# exponents and splitting


def _derivatives(w):
    return w.system.df(w.points[:-1])


def finite_lyapunov(w, min_length=100):
    """QR accumulation of the derivative cocycle along the window."""
    n = len(w) - 1
    if n < min_length:
        raise ValueError(f"window length {n} below {min_length}")
    k = w.system.k
    jac = _derivatives(w)
    cond = np.linalg.cond(jac)
    ok = np.isfinite(cond) & (cond < SINGULAR_COND)
    skipped = int(n - ok.sum())
    if skipped > 0.01 * n:
        raise np.linalg.LinAlgError(f"{skipped} singular derivative steps out of {n}")
    steps = np.nonzero(ok)[0]
    # frozen-coefficient burn-in so that the initial frame carries no transient
    q = np.eye(k, dtype=complex)
    for _ in range(BURN_IN):
        q, _ = np.linalg.qr(jac[steps[0]] @ q)
    if k == 2:
        sums = _qr_sums_2d(jac[steps], q)
    else:
        sums = np.zeros(k)
        for j in steps:
            q, r = np.linalg.qr(jac[j] @ q)
            sums += np.log(np.abs(np.diag(r)))
    chi = np.sort(sums / ok.sum())[::-1]
    m0 = int(np.sum(chi > 1e-12))
    gap = float(chi[m0 - 1] - chi[m0]) if 1 <= m0 <= k - 1 else 0.0
    return LyapunovSpectrum(chi, m0, gap, n, skipped)


def _qr_sums_2d(jac, q):
    """Accumulated log |R_jj| for 2x2 cocycles (scalar Gram-Schmidt, much faster than np.linalg.qr)."""
    a, b, c, d = (complex(v) for v in q.ravel())
    s1 = s2 = 0.0
    for m in jac.tolist():
        (m00, m01), (m10, m11) = m
        u0, u1 = m00 * a + m01 * c, m10 * a + m11 * c
        v0, v1 = m00 * b + m01 * d, m10 * b + m11 * d
        n1 = (abs(u0) ** 2 + abs(u1) ** 2) ** 0.5
        u0, u1 = u0 / n1, u1 / n1
        p = u0.conjugate() * v0 + u1.conjugate() * v1
        v0, v1 = v0 - p * u0, v1 - p * u1
        n2 = (abs(v0) ** 2 + abs(v1) ** 2) ** 0.5
        a, c, b, d = u0, u1, v0 / n2, v1 / n2
        s1 += math.log(n1)
        s2 += math.log(n2)
    return np.array([s1, s2])


def _orth(v):
    q, _ = np.linalg.qr(v)
    return q


def _sin_angle(a, b):
    """Sine of the smallest principal angle between column spaces of a and b (orthonormal)."""
    s = np.linalg.svd(a.conj().T @ b, compute_uv=False)
    c = min(1.0, float(s.max()))
    return float(np.sqrt(max(0.0, 1 - c * c)))


def oseledets_splitting(w, spectrum, seed=0, min_side=50):
    if not spectrum.gap > 0:
        raise ValueError("spectrum has no gap")
    if w.L < min_side or w.M < min_side:
        raise ValueError(f"need L, M >= {min_side}")
    k, k1 = w.system.k, spectrum.m0
    k2 = k - k1
    n = len(w)
    jac = _derivatives(w)
    rng = np.random.default_rng(seed)
    Eu = np.empty((n, k, k1), dtype=complex)
    Es = np.empty((n, k, k2), dtype=complex)
    # frozen-coefficient burn-in at both ends so that constant cocycles are exact
    u = _orth(rng.normal(size=(k, k1)) + 1j * rng.normal(size=(k, k1)))
    for _ in range(BURN_IN):
        u = _orth(jac[0] @ u)
    Eu[0] = u
    for j in range(n - 1):
        u = _orth(jac[j] @ u)
        Eu[j + 1] = u
    s = _orth(rng.normal(size=(k, k2)) + 1j * rng.normal(size=(k, k2)))
    last = w.system.df(w.points[-1])
    for _ in range(BURN_IN):
        s = _orth(np.linalg.lstsq(last, s, rcond=None)[0])
    Es[-1] = s
    for j in range(n - 2, -1, -1):
        try:
            v = np.linalg.solve(jac[j], s)
        except np.linalg.LinAlgError:
            v = np.linalg.lstsq(jac[j], s, rcond=None)[0]
        s = _orth(v)
        Es[j] = s
    res = 0.0
    for j in range(n - 1):
        res = max(res, _sin_angle(Eu[j + 1], _orth(jac[j] @ Eu[j])))
    min_angle = min(_sin_angle(Eu[j], Es[j]) for j in range(n))
    if min_angle < 1e-4:
        raise SplittingDegenerate("splitting degenerate")
    return Splitting(Eu, Es, res, min_angle)


# ---------------------------------------------------------------------------
# Lyapunov basis


def _phase_fix(v):
    """Rotate each column so that its inner product with a fixed real reference is real positive."""
    k = v.shape[0]
    ref = 0.5 ** np.arange(k)
    p = ref @ v
    ph = np.where(np.abs(p) > 0, p / np.where(np.abs(p) > 0, np.abs(p), 1), 1.0)
    return v * ph.conj()


def lyapunov_basis(w, splitting, spectrum, gamma):
    """Frames C_gamma(i) = [u_i / rho_u(i), s_i / rho_s(i)] with finite-window Lyapunov norms.

    rho_u is the backward-weighted norm of the unit unstable vector and rho_s
    the forward-weighted norm of the unit stable vector, both truncated at the
    window ends (normalised so that a constant cocycle gives rho = 1).
    """
    k, k1 = w.system.k, spectrum.m0
    n = len(w)
    jac = _derivatives(w)
    q = np.exp(-gamma)
    chi_u, chi_s = spectrum.chi_u, spectrum.chi_s
    U = np.array([_phase_fix(e) for e in splitting.Eu])
    S = np.array([_phase_fix(e) for e in splitting.Es])
    kap_u = opnorm(jac @ U[:-1])
    kap_s = opnorm(jac @ S[:-1])
    rho_u = np.empty(n)
    rho_s = np.empty(n)
    rho_u[0] = 1.0
    for j in range(n - 1):
        rho_u[j + 1] = (1 - q) + np.exp(chi_u - gamma) * rho_u[j] / kap_u[j]
    rho_s[-1] = 1.0
    for j in range(n - 2, -1, -1):
        rho_s[j] = (1 - q) + np.exp(-(chi_s + gamma)) * kap_s[j] * rho_s[j + 1]
    if max(rho_u.max(), rho_s.max()) > RHO_OVERFLOW or not np.all(np.isfinite(rho_u * rho_s)):
        raise OverflowError("Lyapunov-norm overflow; use a shorter window for this gap")
    frames = [SplitFrame.from_matrix(np.concatenate([U[j] / rho_u[j], S[j] / rho_s[j]], axis=1), k1)
              for j in range(n)]
    bu = np.empty((n - 1, 2))
    bs = np.empty((n - 1, 2))
    for j in range(n - 1):
        a = frames[j + 1].c_gamma_inv @ jac[j] @ frames[j].c_gamma
        su = np.linalg.svd(a[:k1, :k1], compute_uv=False)
        ss = np.linalg.svd(a[k1:, k1:], compute_uv=False)
        bu[j] = su.min(), su.max()
        bs[j] = ss.min(), ss.max()
    warn = []
    lo_u, hi_u = np.exp(chi_u - gamma) / BLOCK_SLACK, np.exp(spectrum.chi_top + gamma) * BLOCK_SLACK
    lo_s, hi_s = np.exp(spectrum.exponents[-1] - gamma) / BLOCK_SLACK, np.exp(chi_s + gamma) * BLOCK_SLACK
    bad_u = np.nonzero((bu[:, 0] < lo_u) | (bu[:, 1] > hi_u))[0]
    bad_s = np.nonzero((bs[:, 0] < lo_s) | (bs[:, 1] > hi_s))[0]
    if len(bad_u):
        warn.append(f"unstable block bound missed at {len(bad_u)} steps (first index {int(bad_u[0]) - w.L})")
    if len(bad_s):
        warn.append(f"stable block bound missed at {len(bad_s)} steps (first index {int(bad_s[0]) - w.L})")
    for msg in warn:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return LyapunovFrames(frames, rho_u, rho_s, bu, bs, warn)


# ---------------------------------------------------------------------------
# Pesin radius


def tempered_envelope(alpha, gamma):
    """sup_j alpha(i+j) e^{-gamma |j|} in two linear passes."""
    a = np.asarray(alpha, dtype=float).copy()
    q = np.exp(-gamma)
    for j in range(1, len(a)):
        a[j] = max(a[j], a[j - 1] * q)
    for j in range(len(a) - 2, -1, -1):
        a[j] = max(a[j], a[j + 1] * q)
    return a


def pesin_alpha(w, frames, eps1=0.1, p=2.0, C=10.0):
    d = w.system.dist_I(w.points)
    n = len(w)
    cn = np.array([fr.norm() for fr in frames.frames])
    cin = np.array([fr.inv_norm() for fr in frames.frames])
    cin_next = np.concatenate([cin[1:], cin[-1:]])
    return np.maximum.reduce([np.ones(n), cn / (eps1 * d ** p), 2 * C * cin_next * cn ** 2 * d ** (-p)])


def pesin_radius(w, frames, gamma, eps1=0.1, p=2.0, C=10.0):
    r = 1.0 / tempered_envelope(pesin_alpha(w, frames, eps1, p, C), gamma)
    bad = np.nonzero(r < R_COLLAPSE)[0]
    if len(bad):
        raise ChartCollapse(f"chart collapse near indeterminacy at index {int(bad[0]) - w.L}")
    return r


# ---------------------------------------------------------------------------
# chart data and local maps


@dataclass
class PesinChartData:
    window: object
    spectrum: LyapunovSpectrum
    splitting: Splitting
    frames: LyapunovFrames
    r: np.ndarray
    gamma: float
    h: float
    consts: dict = field(default_factory=dict)

    @property
    def system(self):
        return self.window.system

    @property
    def k1(self):
        return self.spectrum.m0

    def j(self, i):
        return i + self.window.L

    def frame(self, i):
        return self.frames[self.j(i)]

    def radius(self, i):
        return float(self.r[self.j(i)])

    def g(self, i):
        """Local map g_i(w) in Lyapunov coordinates (batched over rows of w)."""
        sys_, w = self.system, self.window
        x, x1 = w.x(i), w.x(i + 1)
        c, ci = self.frame(i).c_gamma, self.frame(i + 1).c_gamma_inv
        shift = sys_.delta(sys_.f(x), x1)

        def g(v):
            v = np.asarray(v, dtype=complex)
            return (sys_.local_diff(x, v @ c.T) + shift) @ ci.T
        return g

    def dg(self, i):
        sys_, w = self.system, self.window
        x = w.x(i)
        c, ci = self.frame(i).c_gamma, self.frame(i + 1).c_gamma_inv

        def dg(v):
            v = np.asarray(v, dtype=complex)
            return ci @ sys_.df(x + v @ c.T) @ c
        return dg

    def d2g_norm(self, i, v):
        """Frobenius bound on ||D^2 g_i|| at points v."""
        sys_, w = self.system, self.window
        c, ci = self.frame(i).c_gamma, self.frame(i + 1).c_gamma_inv
        t = sys_.d2f(w.x(i) + np.asarray(v, dtype=complex) @ c.T)
        t = np.einsum("ai,...ijl,jb,lc->...abc", ci, t, c, c)
        return np.sqrt(np.sum(np.abs(t) ** 2, axis=(-3, -2, -1)))

    def ambient(self, i, v):
        """Point tau_{x_i} C_gamma(i) v in model coordinates."""
        return self.window.x(i) + np.asarray(v, dtype=complex) @ self.frame(i).c_gamma.T

    def lyap_coords(self, i, z):
        return self.system.delta(z, self.window.x(i)) @ self.frame(i).c_gamma_inv.T

    def verify(self, n_samples=16, seed=0):
        """Check temperedness, g(0) = 0 and the sampled second-derivative bound."""
        ratio = self.r[1:] / self.r[:-1]
        g = self.gamma
        ok_t = bool(np.all((ratio >= np.exp(-g) - 1e-9) & (ratio <= np.exp(g) + 1e-9)))
        rng = np.random.default_rng(seed)
        k = self.system.k
        worst_g0, worst_d2 = 0.0, 0.0
        for i in range(-self.window.L, self.window.M):
            worst_g0 = max(worst_g0, float(np.linalg.norm(self.g(i)(np.zeros(k)))))
            v = _sphere(rng, n_samples, k) * self.radius(i) * rng.uniform(0, 1, (n_samples, 1))
            worst_d2 = max(worst_d2, float(np.max(self.d2g_norm(i, v) * self.radius(i))))
        return {"tempered": ok_t, "g0": worst_g0, "d2_times_r": worst_d2,
                "ok": ok_t and worst_g0 <= 1e-10 and worst_d2 <= 1 + 1e-9}


def _sphere(rng, n, k):
    v = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def build_chart_data(w, gamma, h, eps1=0.1, p=2.0, C=None, seed=0, spectrum=None):
    """Spectrum, splitting, Lyapunov basis and Pesin radius along a window."""
    if C is None:
        C = w.system.d2_const
    spec = finite_lyapunov(w) if spectrum is None else spectrum
    split = oseledets_splitting(w, spec, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        frames = lyapunov_basis(w, split, spec, gamma)
    r = pesin_radius(w, frames, gamma, eps1, p, C)
    return PesinChartData(w, spec, split, frames, r, gamma, h, {"eps1": eps1, "p": p, "C": C})


def read_local_map(data, i, n_samples=64, seed=None, block_tol=1e-8):
    """Blocks A, B of Dg_i(0), remainder evaluator and sampled nonlinearity delta_nl on 5 h r_i."""
    w = data.window
    if not (-w.L <= i < w.M):
        raise IndexError("index and its successor must lie in the window")
    k, k1 = data.system.k, data.k1
    r = data.radius(i)
    R0 = 5 * data.h * r
    if data.system.has_indeterminacy:
        if data.system.dist_I(w.x(i)) <= R0 * data.frame(i).norm():
            raise ValueError("chart ball intersects the indeterminacy set")
    g, dg = data.g(i), data.dg(i)
    d0 = dg(np.zeros(k))
    A, B = d0[:k1, :k1], d0[k1:, k1:]
    off = max(opnorm(d0[:k1, k1:]), opnorm(d0[k1:, :k1]))
    if off > block_tol * opnorm(d0):
        raise ValueError(f"Dg(0) not block diagonal (off-diagonal {off:.2e})")
    g0 = float(np.linalg.norm(g(np.zeros(k))))
    if g0 > 1e-10:
        raise ValueError(f"g(0) = {g0:.2e} is not zero")
    rng = np.random.default_rng(abs(i) if seed is None else seed)
    v = np.concatenate([_sphere(rng, n_samples, k), np.eye(k), -np.eye(k)]) * R0
    delta = _delta_nl(dg, v, A, B, k1)
    d2 = float(np.max(data.d2g_norm(i, np.concatenate([v, np.zeros((1, k))]))))
    return LocalMapData(A, B, g, dg, R0, delta, d2, k1, index=i)


def _delta_nl(dg, v, A, B, k1):
    lin = np.zeros((A.shape[0] + B.shape[0],) * 2, dtype=complex)
    lin[:k1, :k1], lin[k1:, k1:] = A, B
    dr = dg(v) - lin
    return float(max(np.max(opnorm(dr[:, :k1, :])), np.max(opnorm(dr[:, k1:, :]))))


def check_integrability(w):
    """Birkhoff average and minimum of log d(x, I) along the window."""
    d = w.system.dist_I(w.points)
    if np.any(d <= 0):
        raise ValueError("orbit hits the indeterminacy set")
    logs = np.log(d)
    return float(logs.mean()), float(d.min())
