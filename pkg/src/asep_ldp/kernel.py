"""Contour kernel of the tau-Laplace Fredholm determinant.

K^(n)(w, w') = (1/2 pi i) int_{Re u = c} Gamma(-u) Gamma(1+u) (u)_n
               zeta^{u-n} exp(t f(u, w)) du / (w' - tau^u w)

with ``(u)_n = u (u-1) ... (u-n+1)`` and the phase
``f(u, z) = (q-p)/(1 + z/tau) - (q-p)/(1 + tau^u z / tau)``.

Branches are principal: ``tau^u = exp(u ln tau)``, ``zeta^u = exp(u ln zeta)``.
The u-integral runs over Gauss-Legendre panels on ``c + iy, |y| <= Y``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, SingularityError
from .exact_rates import ModelParams, h_q

# Lanczos coefficients, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])


def _gamma_right(z):
    # valid for Re z >= 1/2
    z = z - 1.0
    x = np.full_like(z, _LANCZOS[0])
    for i in range(1, len(_LANCZOS)):
        x = x + _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return np.sqrt(2 * np.pi) * np.exp((z + 0.5) * np.log(t) - t) * x


def complex_gamma(z):
    """Gamma function for complex arguments (Lanczos, reflection for Re z < 1/2).

    Raises SingularityError at the poles 0, -1, -2, ...
    """
    za = np.asarray(z, dtype=complex)
    pole = (za.imag == 0) & (za.real <= 0) & (za.real == np.round(za.real))
    if np.any(pole):
        raise SingularityError(f"Gamma has a pole at {za[pole].ravel()[0]}")
    left = za.real < 0.5
    out = np.empty_like(za)
    zr = np.where(left, 1.0 - za, za)
    g = _gamma_right(zr)
    out = np.where(left, np.pi / (np.sin(np.pi * za) * g), g)
    return complex(out) if out.ndim == 0 else out


def falling_factorial(u, n: int):
    """``prod_{i<n} (u - i)``; equals 1 for n = 0."""
    u = np.asarray(u, dtype=complex)
    out = np.ones_like(u)
    for i in range(n):
        out = out * (u - i)
    return out


def gamma_pochhammer(u, n: int):
    """``Gamma(-u) Gamma(1+u) (u)_n = pi (u)_n / sin(-pi u)``.

    Near the removable points u = 0..n-1 (n >= 1) the factor (u - k) is
    divided out analytically through ``sinc``, so the value stays accurate
    arbitrarily close to those integers.
    """
    u = np.asarray(u, dtype=complex)
    k = np.round(u.real)
    removable = (n >= 1) & (k >= 0) & (k <= n - 1) & (np.abs(u - k) < 0.25)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.pi * falling_factorial(u, n) / np.sin(-np.pi * u)
    if np.any(removable):
        ur, kr = u[removable], k[removable]
        prod = np.ones_like(ur)
        for i in range(n):
            fac = ur - i
            prod = prod * np.where(kr == i, 1.0, fac)
        # (u-k)/sin(-pi u) = -(-1)^k (u-k)/sin(pi (u-k)) = -(-1)^k / (pi sinc(u-k))
        sgn = np.where(kr % 2 == 0, 1.0, -1.0)
        out[removable] = -sgn * prod / np.sinc(ur - kr)
    return out


@dataclass(frozen=True)
class ContourSpec:
    """Discretisation of the w-circle and the vertical u-line.

    delta: radius exponent, circle radius ``tau^(1 - delta/2)``.
    u_real: real part of the u-line; ``None`` means ``delta``.
    u_truncation: half-length Y of the u-line; ``None`` picks it from the
        ``exp(-pi |y|)`` envelope so the discarded tail is below ``tail_eps``.
    u_nodes: Gauss-Legendre order per panel.
    u_panel: panel width in y; ``None`` adapts to the oscillation rate.
    w_nodes: trapezoid nodes on the circle.
    """

    delta: float = 0.5
    u_real: float | None = None
    u_truncation: float | None = None
    u_nodes: int = 16
    u_panel: float | None = None
    w_nodes: int = 128
    tail_eps: float = 1e-17

    def __post_init__(self):
        if not (self.delta > 0):
            raise DomainError(f"delta must be > 0, got {self.delta!r}")
        if self.u_real is not None and not (self.u_real > self.delta / 2):
            raise DomainError("u_real must exceed delta/2 so 1 + tau^(u-1) w stays nonzero")
        if self.w_nodes < 4 or self.u_nodes < 2:
            raise DomainError("too few quadrature nodes")

    @property
    def c(self) -> float:
        return self.delta if self.u_real is None else self.u_real

    def radius(self, params: ModelParams) -> float:
        return params.tau ** (1.0 - self.delta / 2.0)

    def doubled(self) -> "ContourSpec":
        """Contour with twice the nodes in both directions and a longer u-line."""
        from dataclasses import replace
        return replace(self, w_nodes=2 * self.w_nodes, u_nodes=2 * self.u_nodes,
                       tail_eps=self.tail_eps * 1e-3,
                       u_truncation=None if self.u_truncation is None else 1.5 * self.u_truncation)


def check_order(spec: ContourSpec, order_n: int):
    c = spec.c
    if order_n < 0 or int(order_n) != order_n:
        raise DomainError(f"order_n must be a nonnegative integer, got {order_n!r}")
    upper = max(order_n, 1)
    if not (0 < c < upper):
        raise DomainError(f"u-line real part {c} must lie in (0, {upper}) for order {order_n}")


def auto_truncation(n: int, eps: float) -> float:
    """Smallest Y with ``2 pi e^{-pi Y} (Y + n + 1)^n < eps``."""
    Y = 5.0
    for _ in range(100):
        Yn = (math.log(2 * math.pi / eps) + n * math.log(Y + n + 1.0)) / math.pi
        if abs(Yn - Y) < 1e-6:
            break
        Y = Yn
    return Y


@lru_cache(maxsize=64)
def _gl(order: int):
    return np.polynomial.legendre.leggauss(order)


def _pole_distance(spec: ContourSpec, n: int) -> float:
    """Distance from the u-line to the nearest singularity on the real axis.

    The Gamma factor has poles at the integers outside 0..n-1, and the phase
    pole 1 + tau^(u-1) w = 0 reaches the line when c = delta/2.
    """
    c = spec.c
    below = c + 1.0 if n >= 1 else c
    return min(max(n, 1) - c, below, c - spec.delta / 2.0)


def u_line_nodes(spec: ContourSpec, n: int, t: float, log_zeta: float,
                 params: ModelParams):
    """Nodes ``y_k`` and weights for the u-line, panelled over [-Y, Y].

    Panels are graded near y = 0 when the line passes close to a pole.
    """
    Y = spec.u_truncation if spec.u_truncation is not None else auto_truncation(n, spec.tail_eps)
    if spec.u_panel is not None:
        base = spec.u_panel
        d = math.inf
    else:
        # phase speed in y: zeta^{iy} contributes |ln zeta|, exp(t f) at most
        # about t (q-p) |ln tau|; keep ~8 radians per 16-node panel
        omega = abs(log_zeta) + t * params.gamma * abs(params.log_tau) + 1.0
        base = min(0.5, 8.0 / omega) * spec.u_nodes / 16.0
        d = _pole_distance(spec, n)
    scale = spec.u_nodes / 16.0
    right = [0.0]
    while right[-1] < Y:
        step = min(base, 0.5 * scale * math.hypot(d, right[-1]))
        right.append(right[-1] + step)
    right = np.array(right)
    right[-1] = max(right[-1], Y)
    edges = np.concatenate([-right[:0:-1], right])
    x, w = _gl(spec.u_nodes)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    y = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wy = (half[:, None] * w[None, :]).ravel()
    return y, wy


def phase_f(params: ModelParams, u, z):
    """``f(u,z) = (q-p)/(1+z/tau) - (q-p)/(1+tau^u z/tau)`` (broadcasting)."""
    u = np.asarray(u, dtype=complex)
    z = np.asarray(z, dtype=complex)
    tau = params.tau
    d1 = 1.0 + z / tau
    d2 = 1.0 + np.exp((u - 1.0) * params.log_tau) * z
    if np.any(d1 == 0) or np.any(d2 == 0):
        raise SingularityError("phase function evaluated at a pole")
    out = params.gamma / d1 - params.gamma / d2
    return complex(out) if out.ndim == 0 else out


def phase_f_dz(params: ModelParams, u, z):
    """Analytic z-derivative of the phase."""
    u = np.asarray(u, dtype=complex)
    z = np.asarray(z, dtype=complex)
    c = np.exp((u - 1.0) * params.log_tau)
    return -params.gamma / params.tau / (1 + z / params.tau) ** 2 + params.gamma * c / (1 + c * z) ** 2


def critical_points(params: ModelParams, u):
    """The two zeros ``(+tau^(1-u/2), -tau^(1-u/2))`` of the z-derivative."""
    z0 = cmath.exp((1.0 - complex(u) / 2.0) * params.log_tau)
    return z0, -z0


def second_derivative_at_cp(params: ModelParams, u, sign: int):
    """Closed-form z-second derivative of the phase at ``sign * tau^(1-u/2)``."""
    u = complex(u)
    a = cmath.exp(u / 2.0 * params.log_tau)
    t1 = cmath.exp((1.5 * u - 2.0) * params.log_tau)
    t2 = cmath.exp((2.0 * u - 2.0) * params.log_tau)
    g = params.gamma
    if sign == 1:
        den = (1.0 + a) ** 3
        if den == 0:
            raise SingularityError("1 + tau^(u/2) vanishes")
        return 2.0 * g * (t1 - t2) / den
    if sign == -1:
        den = (1.0 - a) ** 3
        if abs(den) == 0:
            raise SingularityError("1 - tau^(u/2) vanishes")
        return -2.0 * g * (t1 + t2) / den
    raise DomainError("sign must be +1 or -1")


def linear_gap_bound(params: ModelParams, rho: float, u, z):
    """Lower bound for ``-h_q(rho) - Re f(u, z)`` on the circle of radius tau^(1-rho/2).

    ``(q-p)(1-a)a / (4(1+a)^2) * (2 tau^(rho/2-1) |z - tau^(1-rho/2)| + |tau^(i Im u) - 1|)``
    with ``a = tau^(rho/2)``.
    """
    u = np.asarray(u, dtype=complex)
    z = np.asarray(z, dtype=complex)
    a = params.tau ** (rho / 2.0)
    pref = params.gamma * (1 - a) * a / (4 * (1 + a) ** 2)
    z0 = params.tau ** (1 - rho / 2.0)
    return pref * (2 * params.tau ** (rho / 2 - 1) * np.abs(z - z0)
                   + np.abs(np.exp(1j * u.imag * params.log_tau) - 1))


def quadratic_gap_bound(params: ModelParams, rho: float, u, z):
    """Lower bound for ``-h_q(rho) - Re f(u, z)`` that is quadratic near the maximiser.

    With ``a = tau^(rho/2)`` and ``c = (q-p) a (1-a) / (2 (1+a)^3)`` this is
    ``c/2 * (|e^{i theta} - 1|^2 + |tau^{i Im u} - 1|^2 / 4)`` for
    ``z = tau^(1-rho/2) e^{i theta}``. The gap is smooth with a maximum at the
    equality point, so no bound linear in those distances can hold there.
    """
    u = np.asarray(u, dtype=complex)
    z = np.asarray(z, dtype=complex)
    a = params.tau ** (rho / 2.0)
    c = params.gamma * a * (1 - a) / (2 * (1 + a) ** 3)
    z0 = params.tau ** (1 - rho / 2.0)
    d_theta = np.abs(z / z0 - 1.0)
    d_y = np.abs(np.exp(1j * u.imag * params.log_tau) - 1.0)
    return 0.5 * c * (d_theta ** 2 + d_y ** 2 / 4.0)


class KernelTable:
    """Precomputed u-line data for one (params, n, zeta, t, spec).

    ``eval(w, wp)`` returns K^(n)(w, wp) for broadcastable arrays.
    """

    def __init__(self, params: ModelParams, order_n: int, zeta: float, t: float,
                 spec: ContourSpec):
        check_order(spec, order_n)
        if not (zeta > 0):
            raise DomainError(f"zeta must be > 0, got {zeta!r}")
        if not (t >= 0):
            raise DomainError(f"t must be >= 0, got {t!r}")
        self.params, self.n, self.zeta, self.t, self.spec = params, order_n, zeta, t, spec
        lz = math.log(zeta)
        y, wy = u_line_nodes(spec, order_n, t, lz, params)
        u = spec.c + 1j * y
        self.u = u
        # du = i dy cancels the i of 1/(2 pi i)
        self.pref = (wy / (2 * np.pi)) * gamma_pochhammer(u, order_n) * np.exp((u - order_n) * lz)
        self.tau_u = np.exp(u * params.log_tau)
        self.tau_um1 = np.exp((u - 1.0) * params.log_tau)

    def phase_weights(self, w):
        """``pref_k * exp(t f(u_k, w))`` with shape ``w.shape + (n_u,)``."""
        w = np.asarray(w, dtype=complex)[..., None]
        g = self.params.gamma
        d1 = 1.0 + w / self.params.tau
        d2 = 1.0 + self.tau_um1 * w
        if np.any(d2 == 0) or np.any(d1 == 0):
            raise SingularityError("phase pole on the w-contour")
        return self.pref * np.exp(self.t * (g / d1 - g / d2))

    def eval(self, w, wp):
        w = np.asarray(w, dtype=complex)
        wp = np.asarray(wp, dtype=complex)
        w, wp = np.broadcast_arrays(w, wp)
        E = self.phase_weights(w)
        den = wp[..., None] - self.tau_u * w[..., None]
        if np.any(den == 0):
            raise SingularityError("w' = tau^u w on the u-line")
        out = np.sum(E / den, axis=-1)
        return complex(out) if out.ndim == 0 else out

    def matrix(self, nodes, block: int = 16):
        """``K(nodes_i, nodes_j)`` assembled in row blocks to bound memory."""
        nodes = np.asarray(nodes, dtype=complex)
        N = nodes.size
        out = np.empty((N, N), dtype=complex)
        for start in range(0, N, block):
            rows = nodes[start:start + block]
            E = self.phase_weights(rows)                     # (b, n_u)
            den = nodes[None, :, None] - self.tau_u[None, None, :] * rows[:, None, None]
            out[start:start + block] = np.einsum("bk,bjk->bj", E, 1.0 / den)
        return out

    def diagonal(self, nodes):
        nodes = np.asarray(nodes, dtype=complex)
        E = self.phase_weights(nodes)
        return np.sum(E / (nodes[:, None] * (1.0 - self.tau_u[None, :])), axis=-1)


def kernel_K(params: ModelParams, order_n: int, zeta: float, t: float,
             spec: ContourSpec, w, w_prime):
    """K^(n)_{zeta,t}(w, w') by quadrature on the u-line."""
    return KernelTable(params, order_n, zeta, t, spec).eval(w, w_prime)


def kernel_envelope(params: ModelParams, order_n: int, zeta: float, t: float, delta: float):
    """``zeta^(delta-n) exp(-t h_q(delta))``, the shape of the kernel bound."""
    return zeta ** (delta - order_n) * math.exp(-t * h_q(params, delta))
