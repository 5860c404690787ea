"""Periodic orbits of the complex Henon map f(x, y) = (x^2 + c - b y, x) by continuation.

In the variable x_n alone an orbit solves x_{n+1} = x_n^2 + c - b x_{n-1}.  For
very negative c the orbits are coded by sign sequences (anti-integrable
limit): x_n = s_n sqrt(x_{n+1} + b x_{n-1} - c).  A periodic itinerary is
continued from such a start to the target parameter along a complex path in
c, which avoids the real bifurcations, with a multiple-shooting Newton solve
at each step.
"""

import numpy as np


def _residual(x, c, b):
    return np.roll(x, -1) - x * x - c + b * np.roll(x, 1)


def _jacobian(x, b):
    n = len(x)
    idx = np.arange(n)
    J = np.zeros((n, n), dtype=complex)
    J[idx, (idx + 1) % n] += 1
    J[idx, idx] += -2 * x
    J[idx, (idx - 1) % n] += b
    return J


def anti_integrable_orbit(signs, c, b, iters=200):
    s = np.asarray(signs, dtype=float)
    x = s * np.sqrt(-complex(c))
    for _ in range(iters):
        x = s * np.sqrt(np.roll(x, -1) + b * np.roll(x, 1) - c)
    return x


def newton_cycle(x, c, b, tol=1e-13, max_iter=50, polish=2):
    """Newton on the cyclic recursion; `polish` extra steps after convergence reach rounding level."""
    extra = 0
    for _ in range(max_iter):
        F = _residual(x, c, b)
        if np.max(np.abs(F)) < tol:
            extra += 1
            if extra > polish:
                return x, True
        x = x - np.linalg.solve(_jacobian(x, b), F)
    return x, bool(np.max(np.abs(_residual(x, c, b))) < 1e-12)


def continue_cycle(word, c, b, c_start=-6.0, bulge=0.7, steps=300):
    """Continue the cycle with itinerary `word` ('0' -> +, '1' -> -) from c_start to c.

    The path is c(s) = c_start + (c - c_start) s + i bulge sin(pi s).  Returns
    the x-coordinates of the cycle, or None when Newton fails along the path.
    """
    signs = [1 if ch == "0" else -1 for ch in word]
    x = anti_integrable_orbit(signs, c_start, b)
    for s in np.linspace(0.0, 1.0, steps + 1):
        cs = c_start + (c - c_start) * s + 1j * bulge * np.sin(np.pi * s)
        x, ok = newton_cycle(x, cs, b)
        if not ok:
            return None
    return x


def cycle_points(xs):
    """Points (x_n, x_{n-1}) of the cycle in the plane; f maps row n to row n+1."""
    xs = np.asarray(xs, dtype=complex)
    return np.stack([xs, np.roll(xs, 1)], axis=1)


def monodromy_exponents(xs, b):
    """Per-iterate Lyapunov exponents of the cycle (determinant trick for the weak one)."""
    m = np.eye(2, dtype=complex)
    logscale = 0.0
    for x in xs:
        m = np.array([[2 * x, -b], [1, 0]]) @ m
        s = np.abs(m).max()
        m /= s
        logscale += np.log(s)
    lam1 = np.max(np.abs(np.linalg.eigvals(m)))
    l1 = (np.log(lam1) + logscale) / len(xs)
    l2 = np.log(abs(b)) - l1
    return l1, l2


def horseshoe_cycle(signs, c, b, iters=400, tol=1e-14):
    """Cycle with the given sign itinerary, by the anti-integrable contraction (large |c| regime).

    Raises when the contraction has not settled to `tol`, which signals that
    (c, b) is outside the horseshoe regime for this itinerary.
    """
    x = anti_integrable_orbit(signs, c, b, iters)
    res = float(np.max(np.abs(_residual(x, c, b))))
    if not res <= tol * max(1.0, float(np.max(np.abs(x)))):
        raise ValueError(f"anti-integrable contraction did not settle (residual {res:.2e})")
    return x


def block_itinerary(rng, core1, core2, count, symbols=(1, -1)):
    """Sign sequence of `count` i.i.d. blocks core1 + [a] + core2, one block per symbol a."""
    blocks = [np.concatenate([core1, [a], core2]) for a in symbols]
    choice = rng.integers(0, len(blocks), count)
    return np.concatenate([blocks[k] for k in choice]), choice
