"""Independent reference values used by several test modules."""

import numpy as np
from numpy.polynomial.legendre import leggauss


def _laguerre_functions(N, x):
    # orthonormal L_k(x) e^{-x/2} for k < N by the three-term recurrence
    phi = np.zeros((N, x.size))
    phi[0] = np.exp(-x / 2)
    if N > 1:
        phi[1] = (1 - x) * phi[0]
    for k in range(1, N - 1):
        phi[k + 1] = ((2 * k + 1 - x) * phi[k] - k * phi[k - 1]) / (k + 1)
    return phi


def lpp_upper_tail(N, s, length=400.0, nodes=200):
    """Exact ``P(H(N) >= s)`` for N x N exponential LPP.

    H(N) has the law of the largest eigenvalue of the N x N Laguerre unitary
    ensemble, so ``P(H(N) < s) = det(I - K_N)`` on ``(s, inf)`` with the
    Laguerre Christoffel-Darboux kernel; the interval is cut at
    ``s + length`` where the kernel is negligible.
    """
    xg, wg = leggauss(nodes)
    x = s + (xg + 1) * length / 2
    w = wg * length / 2
    phi = _laguerre_functions(N, x)
    A = np.sqrt(w)[:, None] * (phi.T @ phi) * np.sqrt(w)[None, :]
    ev = np.linalg.eigvalsh(A)
    return float(-np.expm1(np.sum(np.log1p(-ev))))
