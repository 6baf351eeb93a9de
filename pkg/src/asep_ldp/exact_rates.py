"""Closed-form exponents and rate functions for step-initial ASEP.

Everything here is a pure function of its arguments. The numerical
maximisation in :func:`legendre_dual` exists to test concavity and the
analytic maximiser, not because the answer is unknown.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, OptimizationError, QuadratureError


@dataclass(frozen=True)
class ModelParams:
    """Jump asymmetry. ``q`` is the right-jump probability, ``p = 1 - q``.

    ``tau = p/q`` and ``gamma = q - p`` are derived on construction.
    """

    q: float
    p: float = field(init=False)
    tau: float = field(init=False)
    gamma: float = field(init=False)

    def __post_init__(self):
        q = float(self.q)
        if not (0.5 < q < 1.0):
            raise DomainError(f"q must lie in (1/2, 1), got {q!r}")
        p = 1.0 - q
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "tau", p / q)
        object.__setattr__(self, "gamma", 2.0 * q - 1.0)

    @property
    def log_tau(self) -> float:
        return math.log(self.p / self.q)


@dataclass(frozen=True)
class FractionalOrder:
    """Moment order s split as ``s = n - 1 + alpha`` with ``n = floor(s) + 1``."""

    s: float
    n: int = field(init=False)
    alpha: float = field(init=False)

    def __post_init__(self):
        s = float(self.s)
        if not (s > 0 and math.isfinite(s)):
            raise DomainError(f"order s must be positive and finite, got {s!r}")
        fl = math.floor(s)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "n", int(fl) + 1)
        object.__setattr__(self, "alpha", s - fl)


@dataclass(frozen=True)
class RateReport:
    y: float
    phi_plus: float
    s_star: float
    dual_value: float
    s_numeric: float


def _check_s(s):
    if not (s > 0):
        raise DomainError(f"s must be > 0, got {s!r}")


def h_q(params: ModelParams, s: float) -> float:
    """Lyapunov exponent ``(q-p)(1-tau^{s/2})/(1+tau^{s/2})``.

    Written as ``(q-p)*tanh(-s*ln(tau)/4)``, which is the same number but
    keeps full relative precision for tiny s.
    """
    _check_s(s)
    return params.gamma * math.tanh(-s * params.log_tau / 4.0)


def h_q_limit_slope(params: ModelParams) -> float:
    """Right derivative of h_q at 0, equal to ``(p-q) ln(tau) / 4 > 0``."""
    return 0.25 * (params.p - params.q) * params.log_tau


def B_q(params: ModelParams, s: float) -> float:
    """``h_q(s)/s``; strictly decreasing with limit ``h_q_limit_slope`` at 0."""
    _check_s(s)
    x = -s * params.log_tau / 4.0
    if x < 1e-3:
        # tanh(x)/x in Horner form; unlike tanh(x)/x in floating point this
        # never ticks upward between neighbouring arguments
        x2 = x * x
        return h_q_limit_slope(params) * (1.0 - x2 * (1 / 3 - x2 * (2 / 15 - x2 * (17 / 315))))
    return params.gamma * math.tanh(x) / s


def subadditivity_deficit(params: ModelParams, x: float, y: float) -> float:
    """Closed form of ``h_q(x) + h_q(y) - h_q(x+y)``.

    With ``a = tau^{x/2}``, ``b = tau^{y/2}`` the deficit is
    ``(q-p)(1-a)(1-b)(1-ab) / ((1+a)(1+b)(1+ab))``.
    """
    _check_s(x)
    _check_s(y)
    a = math.exp(x * params.log_tau / 2.0)
    b = math.exp(y * params.log_tau / 2.0)
    num = params.gamma * (-math.expm1(x * params.log_tau / 2.0)) \
        * (-math.expm1(y * params.log_tau / 2.0)) \
        * (-math.expm1((x + y) * params.log_tau / 2.0))
    return num / ((1 + a) * (1 + b) * (1 + a * b))


def _check_y(y):
    if not (0.0 < y < 1.0):
        raise DomainError(f"y must lie in (0, 1), got {y!r}")


def _phi_series(y: float) -> float:
    # sqrt(y) - (1-y) artanh(sqrt(y)) = sum_{k>=1} 2 y^{k+1/2} / (4k^2 - 1)
    total = 0.0
    term = math.sqrt(y)
    k = 1
    while True:
        term *= y
        inc = 2.0 * term / (4 * k * k - 1)
        total += inc
        if inc < 1e-18 * total:
            return total
        k += 1


def phi_plus(y: float) -> float:
    """Upper-tail rate ``sqrt(y) - (1-y) artanh(sqrt(y))`` on (0, 1)."""
    _check_y(y)
    if y < 0.25:
        # the closed form cancels to O(y^{3/2}); the power series does not
        return _phi_series(y)
    r = math.sqrt(y)
    return r - (1.0 - y) * 0.5 * math.log((1.0 + r) / (1.0 - r))


def phi_asymptotic_ratio(y: float) -> float:
    """``phi_plus(y) / y^{3/2}``, which tends to 2/3 as y -> 0+."""
    _check_y(y)
    if y < 1e-12:
        warnings.warn("y < 1e-12: y^{3/2} is near the underflow range",
                      RuntimeWarning, stacklevel=2)
    # divide the series by y^{3/2} term by term: sum 2 y^{k-1} / (4k^2-1)
    if y < 0.25:
        total, term, k = 0.0, 1.0, 1
        while True:
            inc = 2.0 * term / (4 * k * k - 1)
            total += inc
            if inc < 1e-18 * total:
                return total
            term *= y
            k += 1
    return phi_plus(y) / y ** 1.5


def dual_objective(params: ModelParams, y: float, s: float) -> float:
    """Concave function whose supremum over s > 0 is phi_plus(y)."""
    return s * (1.0 - y) / 4.0 * params.log_tau + h_q(params, s) / params.gamma


def dual_maximizer(params: ModelParams, y: float) -> float:
    """Analytic argmax ``2 log_tau((1-sqrt y)/(1+sqrt y))``."""
    _check_y(y)
    r = math.sqrt(y)
    return 2.0 * math.log((1.0 - r) / (1.0 + r)) / params.log_tau


def legendre_dual(params: ModelParams, y: float, xtol: float = 1e-12) -> RateReport:
    """Maximise :func:`dual_objective` numerically and report both optima."""
    _check_y(y)
    lt = params.log_tau

    def slope(s):
        # d/ds of the objective; the tanh form avoids cancellation
        th = math.tanh(-s * lt / 4.0)
        return (1.0 - y) / 4.0 * lt - lt / 4.0 * (1.0 - th * th)

    lo, hi = 1e-8, 1.0
    if slope(lo) <= 0:
        raise OptimizationError(f"objective not increasing at s={lo} for y={y}")
    for _ in range(200):
        if slope(hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise OptimizationError(f"no sign change of the slope found for y={y}")

    # bounded golden-section/Brent search (scipy) on the bracket
    res = optimize.minimize_scalar(lambda s: -dual_objective(params, y, s),
                                   bounds=(lo, hi),
                                   method="bounded",
                                   options={"xatol": xtol, "maxiter": 500})
    if not res.success:
        raise OptimizationError(f"bounded search failed: {res.message}")
    s_num = float(res.x)
    # the objective is flat near its peak, so value-level accuracy is much
    # better than argmax accuracy; polish the argmax on the slope itself
    try:
        s_num = optimize.brentq(slope, lo, hi, xtol=1e-14)
    except ValueError as exc:
        raise OptimizationError(str(exc)) from exc
    s_star = dual_maximizer(params, y)
    return RateReport(y=y, phi_plus=phi_plus(y), s_star=s_star,
                      dual_value=dual_objective(params, y, s_num), s_numeric=s_num)


def y0_threshold(q: float) -> float:
    """``(1 - 2 sqrt(q(1-q))) / (1 + 2 sqrt(q(1-q)))``; diagnostic only.

    Takes ``q`` directly (not ModelParams) so the q=1/2 and q=1 limits
    are reachable.
    """
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"q must lie in [0, 1], got {q!r}")
    r = 2.0 * math.sqrt(q * (1.0 - q))
    return (1.0 - r) / (1.0 + r)


def tasep_J(t: float) -> float:
    """TASEP/LPP rate ``sqrt(t^2-4t) - 2 ln((t-2+sqrt(t^2-4t))/2)`` for t >= 4."""
    if not (t >= 4.0):
        raise DomainError(f"t must be >= 4, got {t!r}")
    r = math.sqrt(t * t - 4.0 * t)
    return r - 2.0 * math.log((t - 2.0 + r) / 2.0)


def tasep_GV_integral(t: float, tol: float = 1e-12) -> float:
    """Quadrature of ``int_4^t sqrt(x^2-4x)/x dx``.

    With ``x = 4/(1-u^2)`` the integrand becomes ``8u^2/(1-u^2)^2`` on
    ``[0, sqrt(1-4/t)]``, which is smooth, so plain adaptive quadrature
    converges fast.
    """
    if not (t >= 4.0):
        raise DomainError(f"t must be >= 4, got {t!r}")
    if t == 4.0:
        return 0.0
    upper = math.sqrt(1.0 - 4.0 / t)
    # ask for headroom below tol, but not past what doubles can deliver
    eps = max(tol * 1e-2, 1e-13)
    val, err = integrate.quad(lambda u: 8.0 * u * u / (1.0 - u * u) ** 2, 0.0, upper,
                              epsabs=eps, epsrel=eps, limit=200)
    if not err < tol:
        raise QuadratureError(f"GV integral error estimate {err:.3g} above tol {tol:.3g}")
    return val


def mp_density(x):
    """Marchenko-Pastur density ``sqrt(4x - x^2)/(2 pi x)`` on (0, 4], else 0."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x <= 4)
    xs = np.where(inside, x, 1.0)
    out = np.where(inside, np.sqrt(np.clip(4 * xs - xs * xs, 0, None)) / (2 * np.pi * xs), 0.0)
    return float(out) if out.ndim == 0 else out


def mp_total_mass(tol: float = 1e-12) -> float:
    """Integral of :func:`mp_density` over [0, 4].

    The density is ``x^{-1/2}(4-x)^{1/2}/(2 pi)``; QUADPACK's algebraic
    weight absorbs both endpoint singularities exactly.
    """
    val, err = integrate.quad(lambda x: 1.0 / (2 * np.pi), 0.0, 4.0,
                              weight="alg", wvar=(-0.5, 0.5), epsabs=tol, epsrel=tol)
    if not err < 1e-8:
        raise QuadratureError(f"MP normalisation error estimate {err:.3g}")
    return val
