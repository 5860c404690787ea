"""Independent reference computations and random instances shared by the tests."""

import numpy as np

from hypclose.core import HORIZONTAL, VERTICAL, graph_from_function
from hypclose.graphtransform import quadratic_local_map


def random_local_map(rng, chi_u, chi_s, gamma, h, r=1.0):
    """Quadratic local map in Lyapunov form on the ball 5hr, with ||D^2 g|| <= 1/r.

    |A| lies in [e^{chi_u - gamma}, e^{chi_u + gamma}] and |B| in
    [e^{chi_s - gamma}, e^{chi_s + gamma}], each with a random phase.
    """
    A = np.exp(chi_u + rng.uniform(-gamma, gamma) + 2j * np.pi * rng.uniform())
    B = np.exp(chi_s + rng.uniform(-gamma, gamma) + 2j * np.pi * rng.uniform())
    Q = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
    Q *= rng.uniform(0, 0.5) / r / np.sqrt(np.sum(np.abs(Q) ** 2))  # 2 ||Q||_F <= 1/r
    return quadratic_local_map([[A]], [[B]], Q, 5 * h * r, seed=int(rng.integers(1 << 30)))


def random_graph(rng, orientation, alpha, lip, offset):
    """Polynomial graph with measured Lip <= lip and |phi(0)| <= offset on B(0, alpha)."""
    c0 = offset * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
    c = rng.normal(size=3) + 1j * rng.normal(size=3)
    # |phi'| <= sum_k k |c_k| alpha^{k-1}; scale so that this is at most lip
    raw = sum((k + 1) * abs(c[k]) * alpha ** k for k in range(3))
    c *= lip * rng.uniform(0, 0.999) / raw
    return graph_from_function(lambda t: c0 + c[0] * t + c[1] * t ** 2 + c[2] * t ** 3,
                               orientation, alpha, lip, offset)


def qr_lyapunov_real(f, jac, x0, n, transient=1000):
    """Plain real QR (Benettin) estimate of the exponents of a planar map."""
    x = np.array(x0, dtype=float)
    for _ in range(transient):
        x = f(x)
    q = np.eye(2)
    sums = np.zeros(2)
    for _ in range(n):
        q, r = np.linalg.qr(jac(x) @ q)
        sums += np.log(np.abs(np.diag(r)))
        x = f(x)
    return np.sort(sums / n)[::-1]


def brute_separated_count(orbits, eps, dist):
    """Greedy maximal (m, eps)-separated subset by an O(n^2) scan; orbits shape (n, m, k)."""
    kept = []
    for j in range(orbits.shape[0]):
        if all(np.max(dist(orbits[j], orbits[i])) > eps for i in kept):
            kept.append(j)
    return len(kept)


__all__ = ["HORIZONTAL", "VERTICAL", "random_local_map", "random_graph", "qr_lyapunov_real",
           "brute_separated_count"]
