"""Nystrom discretisation of the contour kernel and the quantities built on it:
Fredholm determinant, traces, exterior-power traces, their zeta-derivatives,
and the leading term of the fractional-moment integral.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, QuadratureError
from .exact_rates import B_q, FractionalOrder, ModelParams, h_q
from .kernel import ContourSpec, KernelTable, check_order, gamma_pochhammer, u_line_nodes


@dataclass(frozen=True)
class NystromOperator:
    """Trapezoid nodes on the circle and ``M[i, j] = K(w_i, w_j) * weight_j``.

    The weights ``w_j / N`` already include ``dw = i w dtheta`` and the
    ``1/(2 pi i)`` orientation factor.
    """

    nodes: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray


def circle_nodes(params: ModelParams, spec: ContourSpec):
    N = spec.w_nodes
    theta = 2 * np.pi * np.arange(N) / N
    w = spec.radius(params) * np.exp(1j * theta)
    return w, w / N


def build_nystrom(params: ModelParams, order_n: int, zeta: float, t: float,
                  spec: ContourSpec) -> NystromOperator:
    nodes, weights = circle_nodes(params, spec)
    table = KernelTable(params, order_n, zeta, t, spec)
    M = table.matrix(nodes) * weights[None, :]
    return NystromOperator(nodes=nodes, weights=weights, matrix=M)


def fredholm_det(op: NystromOperator) -> complex:
    """``det(I + M)`` through an LU factorisation (partial pivoting).

    The exact value is real; the imaginary part is a discretisation residue
    and is returned unchanged so callers can inspect it.
    """
    A = np.eye(op.matrix.shape[0], dtype=complex) + op.matrix
    sign, logabs = np.linalg.slogdet(A)
    if not np.isfinite(logabs):
        raise QuadratureError("determinant factorisation failed")
    return complex(sign * np.exp(logabs))


def elementary_symmetric(eigs, L_max: int) -> np.ndarray:
    """``e_0 .. e_{L_max}`` of the given numbers."""
    e = np.zeros(L_max + 1, dtype=complex)
    e[0] = 1.0
    for lam in eigs:
        e[1:] = e[1:] + lam * e[:-1]
    return e


def exterior_trace(op: NystromOperator, L: int) -> complex:
    """Trace of the L-th exterior power: the elementary symmetric function e_L."""
    dim = op.matrix.shape[0]
    if not (1 <= L <= dim):
        raise DomainError(f"L must lie in [1, {dim}]")
    eigs = np.linalg.eigvals(op.matrix)
    return complex(elementary_symmetric(eigs, L)[L])


def exterior_traces(op: NystromOperator, L_max: int = 8) -> np.ndarray:
    """``[1, e_1, ..., e_{L_max}]`` from one eigen-decomposition."""
    eigs = np.linalg.eigvals(op.matrix)
    return elementary_symmetric(eigs, L_max)


def trace_Kn(params: ModelParams, order_n: int, zeta: float, t: float,
             spec: ContourSpec) -> complex:
    """``(1/2 pi i) \\oint K^(n)(w, w) dw`` by the circle trapezoid rule."""
    nodes, weights = circle_nodes(params, spec)
    table = KernelTable(params, order_n, zeta, t, spec)
    return complex(np.sum(table.diagonal(nodes) * weights))


@dataclass(frozen=True)
class CompositionSet:
    """Weak compositions ``m_1 + ... + m_L = n`` with multinomial weights."""

    L: int
    n: int
    members: tuple = field(init=False)

    def __post_init__(self):
        if self.L < 1 or self.n < 0:
            raise DomainError("need L >= 1 and n >= 0")
        mem = tuple(m for m in itertools.product(range(self.n + 1), repeat=self.L)
                    if sum(m) == self.n)
        object.__setattr__(self, "members", mem)

    @staticmethod
    def multinomial(m) -> int:
        out, rest = 1, sum(m)
        for k in m:
            out *= math.comb(rest, k)
            rest -= k
        return out


def _perm_sign_cycles(perm):
    seen = [False] * len(perm)
    cycles = []
    for i in range(len(perm)):
        if not seen[i]:
            cyc, j = [], i
            while not seen[j]:
                seen[j] = True
                cyc.append(j)
                j = perm[j]
            cycles.append(cyc)
    sign = (-1) ** (len(perm) - len(cycles))
    return sign, cycles


def mixed_determinant_integral(mats, m) -> complex:
    """Discretised ``int det[K^(m_i)(w_i, w_j)] prod dw_i / (2 pi i)``.

    ``mats[k]`` is the weighted Nystrom matrix of order k. Expanding the
    determinant over permutations, the node sums factor over cycles into
    traces of matrix products.
    """
    L = len(m)
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(L)):
        sign, cycles = _perm_sign_cycles(perm)
        term = 1.0 + 0.0j
        for cyc in cycles:
            prod = mats[m[cyc[0]]]
            for i in cyc[1:]:
                prod = prod @ mats[m[i]]
            term *= np.trace(prod)
        total += sign * term
    return complex(total)


def dzeta_exterior_trace(params: ModelParams, L: int, n: int, zeta: float, t: float,
                         spec: ContourSpec) -> complex:
    """n-th zeta-derivative of ``tr(K^{wedge L})`` term by term."""
    comp = CompositionSet(L, n)
    needed = sorted({k for m in comp.members for k in m})
    nodes, weights = circle_nodes(params, spec)
    mats = {}
    for k in needed:
        # the u-line must sit inside (0, k v 1) for every order used
        kspec = spec if spec.c < max(k, 1) else replace(spec, u_real=None)
        mats[k] = KernelTable(params, k, zeta, t, kspec).matrix(nodes) * weights[None, :]
    total = sum(CompositionSet.multinomial(m) * mixed_determinant_integral(mats, m)
                for m in comp.members)
    return complex(total / math.factorial(L))


@dataclass(frozen=True)
class LeadingTermParams:
    order: FractionalOrder
    t: float

    def __post_init__(self):
        if not (self.t > 0):
            raise DomainError("t must be > 0")

    def log_zeta_upper(self, params: ModelParams) -> float:
        return self.t * B_q(params, self.order.s / 2.0)

    def zeta_upper(self, params: ModelParams) -> float:
        return math.exp(self.log_zeta_upper(params))

    @staticmethod
    def v(params: ModelParams, k: int) -> float:
        return -2.0 * math.pi * k / params.log_tau


def steepest_contour(params: ModelParams, order: FractionalOrder, w_nodes: int = 256,
                     u_nodes: int = 16, tail_eps: float = 1e-17) -> ContourSpec:
    """u-line through Re u = s and circle radius tau^(1 - s/2)."""
    s = order.s
    return ContourSpec(delta=s, u_real=s, w_nodes=w_nodes, u_nodes=u_nodes, tail_eps=tail_eps)


class TraceProfile:
    """``r -> tr K^(n)_{e^r, t}`` as ``sum_k c_k exp((u_k - n) r)``.

    The zeta dependence of the trace sits entirely in ``zeta^(u - n)``, so
    the circle and u-line sums are done once and reused for every r.
    """

    def __init__(self, params: ModelParams, order_n: int, t: float, spec: ContourSpec,
                 log_zeta_max: float):
        check_order(spec, order_n)
        nodes, _ = circle_nodes(params, spec)
        # u-line panels sized for the largest zeta used
        y, wy = u_line_nodes(spec, order_n, t, log_zeta_max, params)
        u = spec.c + 1j * y
        base = (wy / (2 * np.pi)) * gamma_pochhammer(u, order_n) / (1.0 - np.exp(u * params.log_tau))
        g = params.gamma
        acc = np.zeros(u.size, dtype=complex)
        tau_um1 = np.exp((u - 1.0) * params.log_tau)
        for j in range(nodes.size):
            w = nodes[j]
            acc += np.exp(t * (g / (1 + w / params.tau) - g / (1 + tau_um1 * w)))
        self.coef = base * acc / nodes.size
        self.u = u
        self.y = y
        self.n = order_n

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(np.multiply.outer(r, self.u - self.n)) @ self.coef


def _gl_panels(f, a, b, panels, order=32):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    total = 0.0 + 0.0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        h = 0.5 * (hi - lo)
        total += h * np.sum(w * f(0.5 * (hi + lo) + h * x))
    return total


def leading_term_A(params: ModelParams, lt: LeadingTermParams, spec: ContourSpec | None = None,
                   tol: float = 1e-10) -> complex:
    """``(-1)^n int_1^{exp(t B_q(s/2))} zeta^{-alpha} tr K^(n)_{zeta,t} dzeta``.

    Contours sit on the steepest-descent choice (Re u = s, radius
    tau^(1-s/2)). With zeta = e^r the integrand is
    ``e^{r(1-alpha)} tr K^(n)(e^r)``; composite Gauss-Legendre panels on
    [0, t B_q(s/2)] are doubled until two successive sums agree to ``tol``
    relative.
    """
    order = lt.order
    if spec is None:
        spec = steepest_contour(params, order)
    R = lt.log_zeta_upper(params)
    prof = TraceProfile(params, order.n, lt.t, spec, R)
    sign = (-1) ** order.n

    def integrand(r):
        return np.exp(r * (1.0 - order.alpha)) * prof(r)

    panels = max(4, math.ceil(R))
    prev = _gl_panels(integrand, 0.0, R, panels)
    for _ in range(8):
        panels *= 2
        cur = _gl_panels(integrand, 0.0, R, panels)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            return complex(sign * cur)
        prev = cur
    raise QuadratureError(f"leading term r-quadrature did not settle: {abs(cur - prev):.3g}")


def leading_term_A_closed(params: ModelParams, lt: LeadingTermParams,
                          spec: ContourSpec | None = None) -> complex:
    """Same quantity with the zeta-integral done in closed form.

    On the steepest-descent line ``zeta^{-alpha} zeta^{u-n} = zeta^{-1+iy}``,
    so each u-node contributes ``(e^{iRy} - 1)/(iy)``.
    """
    order = lt.order
    if spec is None:
        spec = steepest_contour(params, order)
    if spec.c != order.s:
        raise DomainError("closed form needs the u-line at Re u = s")
    R = lt.log_zeta_upper(params)
    prof = TraceProfile(params, order.n, lt.t, spec, R)
    y = prof.y
    small = np.abs(y) * R < 1e-8
    ys = np.where(small, 1.0, y)
    E = np.where(small, R + 0.5j * y * R * R, np.expm1(1j * R * ys) / (1j * ys))
    return complex((-1) ** order.n * np.sum(prof.coef * E))


def _C0_prefactor(params: ModelParams, s: float) -> float:
    tau = params.tau
    a = tau ** (s / 2)
    return math.sqrt((1 + a) ** 3 / (4 * math.pi * params.gamma
                                     * (tau ** (1.5 * s - 2) - tau ** (2 * s - 2))))


def steepest_descent_C0(params: ModelParams, order: FractionalOrder, k: int = 0,
                        eps: float | None = None) -> complex:
    """Closed-form steepest-descent constant with only the ``1/sin`` Gamma factor.

    ``sqrt((1+a)^3 / (4 pi (q-p)(tau^{3s/2-2} - tau^{2s-2})))
    * (-1)^n (s + i v_k)_n / (sin(-pi (s + i v_k)) (1 - tau^s))``, a = tau^{s/2}.

    For integer s and k = 0 the ratio ``(s)_n / sin(-pi s)`` is 0/0. By
    default it is evaluated through the removable-singularity form; with
    ``eps`` given it is instead the average over ``s +- eps``.
    """
    s, n = order.s, order.n
    v = LeadingTermParams.v(params, k)
    pre = _C0_prefactor(params, s)
    tail = (-1) ** n / (1 - params.tau ** s)

    def ratio(x):
        # gamma_pochhammer = pi (u)_n / sin(-pi u)
        return complex(gamma_pochhammer(np.array([x + 1j * v]), n)[0]) / math.pi

    if eps is not None:
        r = 0.5 * (ratio(s + eps) + ratio(s - eps))
    else:
        r = ratio(s)
    return complex(pre * tail * r)


def trace_laplace_C0(params: ModelParams, order: FractionalOrder, k: int = 0) -> complex:
    """Constant from a Laplace-method expansion of the trace integral.

    Differs from :func:`steepest_descent_C0` by the factor
    ``pi * tau^(s/2 - 1)``: the Gamma product contributes ``pi / sin``,
    and the theta-Gaussian carries the radius squared ``tau^(2 - s)``.
    """
    s = order.s
    return steepest_descent_C0(params, order, k) * math.pi * params.tau ** (s / 2 - 1)


def finite_window_factor(params: ModelParams, order: FractionalOrder, t: float) -> float:
    """Gaussian mass of the r-profile below the cutoff ``r = t B_q(s/2)``.

    The trace profile in r = ln zeta peaks at ``t h_q'(s)`` with variance
    ``t |h_q''(s)|``; the cutoff sits close to the peak, so at moderate t
    only part of the mass is inside. Returns ``Phi((R - t h') / sqrt(t |h''|))``.
    """
    from scipy.special import ndtr
    s = order.s
    lt = -params.log_tau
    x = s * lt / 4
    sech2 = 1 / math.cosh(x) ** 2
    d1 = params.gamma * lt / 4 * sech2
    d2 = -2 * params.gamma * (lt / 4) ** 2 * sech2 * math.tanh(x)
    R = t * B_q(params, s / 2)
    return float(ndtr((R - t * d1) / math.sqrt(t * abs(d2))))


def leading_term_ratio(params: ModelParams, order: FractionalOrder, t: float,
                       A: complex | None = None) -> float:
    """``sqrt(t) exp(t h_q(s)) Re A_s(t)``."""
    if A is None:
        A = leading_term_A(params, LeadingTermParams(order, t))
    return math.sqrt(t) * math.exp(t * h_q(params, order.s)) * A.real
