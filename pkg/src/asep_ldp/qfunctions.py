"""The tau-Pochhammer reciprocal F_q(zeta) = prod_{j>=0} 1/(1 + zeta tau^j)
and its derivatives on the nonnegative real axis.

Derivatives come from the log-derivative ladder
``G^(m) = d^m/dzeta^m (F_q'/F_q)`` and the Leibniz recurrence
``F^(n+1) = sum_k C(n,k) F^(n-k) G^(k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, QuadratureError
from .exact_rates import FractionalOrder, ModelParams


@dataclass(frozen=True)
class QFuncConfig:
    """Truncation of the infinite product and of the G-series.

    ``product_truncation=None`` picks the smallest N with
    ``zeta * tau^(N+1) / (1 - tau) < tail_tol`` per call.
    """

    product_truncation: int | None = None
    tail_tol: float = 1e-17


DEFAULT_CFG = QFuncConfig()


def _n_terms(params: ModelParams, zeta_max: float, cfg: QFuncConfig) -> int:
    if cfg.product_truncation is not None:
        n = int(cfg.product_truncation)
        bound = max(zeta_max, 1.0) * params.tau ** (n + 1) / (1.0 - params.tau)
        if bound >= cfg.tail_tol:
            raise DomainError(
                f"product_truncation={n} leaves tail bound {bound:.2e} >= {cfg.tail_tol:.2e}")
        return n
    # zeta_max >= 1 also covers the G-series, whose terms are <= tau^j
    z = max(zeta_max, 1.0)
    n = math.ceil((math.log(cfg.tail_tol * (1.0 - params.tau)) - math.log(z))
                  / params.log_tau)
    return max(n, 1)


def _as_array(zeta):
    z = np.asarray(zeta, dtype=float)
    if np.any(z < 0) or np.any(~np.isfinite(z)):
        raise DomainError("zeta must be finite and >= 0")
    return z


def _ret(z, out):
    return float(out) if np.ndim(z) == 0 else out


def log_F_q(params: ModelParams, zeta, cfg: QFuncConfig = DEFAULT_CFG):
    """``-sum_j log1p(zeta tau^j)``."""
    z = _as_array(zeta)
    N = _n_terms(params, float(np.max(z, initial=0.0)), cfg)
    powers = params.tau ** np.arange(N + 1)
    out = -np.log1p(np.multiply.outer(z, powers)).sum(axis=-1)
    return _ret(z, out)


def F_q(params: ModelParams, zeta, cfg: QFuncConfig = DEFAULT_CFG):
    """``prod_{j>=0} (1 + zeta tau^j)^{-1}``, a value in (0, 1]."""
    z = _as_array(zeta)
    return _ret(z, np.exp(log_F_q(params, z, cfg)))


def G_m(params: ModelParams, m: int, zeta, cfg: QFuncConfig = DEFAULT_CFG):
    """m-th derivative of ``F_q'/F_q``.

    ``-sum_{j>=0} tau^j (-1)^m m! tau^{mj} / (1 + zeta tau^j)^{m+1}``.
    The sum starts at j=0 so that ``G^(0) = F_q'/F_q`` exactly.
    """
    if m < 0 or int(m) != m:
        raise DomainError(f"m must be a nonnegative integer, got {m!r}")
    m = int(m)
    z = _as_array(zeta)
    N = _n_terms(params, float(np.max(z, initial=0.0)), cfg)
    tj = params.tau ** np.arange(N + 1)
    base = np.multiply.outer(z, tj)
    terms = tj ** (m + 1) / (1.0 + base) ** (m + 1)
    out = -((-1) ** m) * math.factorial(m) * terms.sum(axis=-1)
    return _ret(z, out)


def F_q_derivs(params: ModelParams, n: int, zeta, cfg: QFuncConfig = DEFAULT_CFG):
    """Stack ``[F^(0), ..., F^(n)]`` along axis 0 via the Leibniz recurrence."""
    if n < 0 or int(n) != n:
        raise DomainError(f"n must be a nonnegative integer, got {n!r}")
    n = int(n)
    z = _as_array(zeta)
    F = [np.asarray(F_q(params, z, cfg))]
    G = [np.asarray(G_m(params, k, z, cfg)) for k in range(n)]
    for k in range(n):
        nxt = sum(math.comb(k, j) * F[k - j] * G[j] for j in range(k + 1))
        F.append(np.asarray(nxt))
    return np.stack(F)


def F_q_deriv(params: ModelParams, n: int, zeta, cfg: QFuncConfig = DEFAULT_CFG):
    """n-th zeta-derivative of F_q. ``(-1)^n F_q^(n) >= 0`` on zeta >= 0."""
    z = _as_array(zeta)
    return _ret(z, F_q_derivs(params, n, z, cfg)[-1])


def _split_quad(fun, alpha, tol):
    """``int_0^inf zeta^{-alpha} fun(zeta) dzeta`` split at zeta = 1.

    The lower piece carries the algebraic endpoint weight; the upper piece
    uses zeta = u/(1-u) on [1/2, 1).
    """
    if alpha > 0:
        lo, elo = integrate.quad(fun, 0.0, 1.0, weight="alg", wvar=(-alpha, 0.0),
                                 epsabs=tol * 1e-2, epsrel=tol * 1e-2, limit=200)
    else:
        lo, elo = integrate.quad(fun, 0.0, 1.0, epsabs=tol * 1e-2, epsrel=tol * 1e-2,
                                 limit=200)

    def upper(u):
        if u >= 1.0:
            return 0.0
        zeta = u / (1.0 - u)
        return zeta ** (-alpha) * fun(zeta) / (1.0 - u) ** 2

    hi, ehi = integrate.quad(upper, 0.5, 1.0, epsabs=tol * 1e-2, epsrel=tol * 1e-2,
                             limit=400)
    if not (elo + ehi) < tol * max(1.0, abs(lo + hi)):
        raise QuadratureError(f"error estimate {elo + ehi:.3g} above tolerance {tol:.3g}")
    return lo + hi


def weighted_integral(params: ModelParams, n: int, alpha: float, tol: float = 1e-10,
                      cfg: QFuncConfig = DEFAULT_CFG) -> float:
    """``(-1)^n int_0^inf zeta^{-alpha} F_q^(n)(zeta) dzeta``, strictly positive."""
    if n < 1 or int(n) != n:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    if not (0.0 <= alpha < 1.0):
        raise DomainError(f"alpha must lie in [0, 1), got {alpha!r}")
    sign = (-1) ** int(n)
    return _split_quad(lambda z: sign * F_q_deriv(params, n, z, cfg), alpha, tol)


def fractional_moment_sides(params: ModelParams, order: FractionalOrder,
                            atoms: Sequence[float], probs: Sequence[float],
                            tol: float = 1e-10, cfg: QFuncConfig = DEFAULT_CFG):
    """Both sides of the moment identity for a finitely supported U.

    Left: ``E[U^s]``. Right: the ratio of
    ``int zeta^{-alpha} E[U^n F^(n)(zeta U)] dzeta`` to
    ``int zeta^{-alpha} F^(n)(zeta) dzeta``, each by quadrature.
    """
    u = np.asarray(atoms, dtype=float)
    w = np.asarray(probs, dtype=float)
    if u.shape != w.shape or u.ndim != 1 or u.size == 0:
        raise DomainError("atoms and probs must be equal-length 1-d sequences")
    if np.any(u < 0) or np.any(u > 1) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise DomainError("U must be a probability distribution on [0, 1]")
    n, alpha, s = order.n, order.alpha, order.s
    lhs = float(np.sum(w * np.where(u > 0, u, 0.0) ** s))
    sign = (-1) ** n
    pos = u > 0
    up, wp = u[pos], w[pos]
    if up.size == 0:
        return lhs, 0.0

    def num_integrand(z):
        return sign * float(np.sum(wp * up ** n * F_q_deriv(params, n, z * up, cfg)))

    num = _split_quad(num_integrand, alpha, tol)
    den = weighted_integral(params, n, alpha, tol, cfg)
    return lhs, num / den


def fractional_moment_check(params: ModelParams, order: FractionalOrder,
                            atoms: Sequence[float], probs: Sequence[float],
                            tol: float = 1e-6, cfg: QFuncConfig = DEFAULT_CFG) -> bool:
    lhs, rhs = fractional_moment_sides(params, order, atoms, probs, min(tol, 1e-9), cfg)
    return abs(lhs - rhs) <= tol
