"""Monte Carlo estimators that connect the simulator to the exact formulas."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InconclusiveError
from .exact_rates import ModelParams, h_q, phi_plus, tasep_J
from .fredholm import build_nystrom, fredholm_det
from .kernel import ContourSpec
from .qfunctions import F_q
from .simulator import AsepSamples, H0Convention, asep_samples, lpp_values

log = logging.getLogger(__name__)

# one-sided 95% level for the zero-hit bound
ZERO_HIT_ALPHA = 0.05


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with standard error ``sd/sqrt(n)`` and seed provenance.

    ``upper_bound`` is set only for zero-hit probability estimates.
    """

    mean: float
    stderr: float
    n: int
    seed: int
    upper_bound: float | None = None

    def z_score(self, reference: float) -> float:
        diff = self.mean - reference
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return m, se


def _check_n(n_samples, minimum=1):
    if int(n_samples) < minimum:
        raise DomainError(f"n_samples must be >= {minimum}, got {n_samples!r}")


def tau_laplace_values(params: ModelParams, zeta: float, h0: np.ndarray) -> np.ndarray:
    """``F_q(zeta tau^h0)`` through a lookup table over the observed range."""
    h0 = np.asarray(h0, dtype=np.int64)
    table = np.asarray(F_q(params, zeta * params.tau ** np.arange(int(h0.max(initial=0)) + 1)))
    return table[h0]


def estimate_tau_laplace(params: ModelParams, zeta: float, t: float, n_samples: int,
                         seed: int, convention=H0Convention.GEQ_ZERO,
                         workers: int | None = None) -> McEstimate:
    """MC estimate of ``E[F_q(zeta tau^{H0(t)})]``."""
    _check_n(n_samples, 100)
    if not (zeta > 0):
        raise DomainError("zeta must be > 0")
    if t == 0:
        return McEstimate(float(F_q(params, zeta)), 0.0, int(n_samples), seed)
    S = asep_samples(params.q, [t], n_samples, seed, workers=workers)
    m, se = _mean_se(tau_laplace_values(params, zeta, S.h0(convention)))
    return McEstimate(m, se, int(n_samples), seed)


@dataclass(frozen=True)
class LyapunovReport:
    s: float
    t_grid: tuple
    empirical: tuple          # McEstimate of (1/t) ln E[tau^{s H0(t)}] per t
    exact: float              # -h_q(s)
    extrapolated: float       # fitted slope
    fit: dict = field(default_factory=dict)


def lyapunov_from_samples(params: ModelParams, s: float, t_grid, h0_columns,
                          seed: int, n: int) -> LyapunovReport:
    """Lyapunov estimate from H0 already sampled at each time in ``t_grid``."""
    if not (s > 0):
        raise DomainError("s must be > 0")
    T = np.asarray(t_grid, dtype=float)
    emp = []
    logm = []
    for t, h in zip(T, h0_columns):
        h = np.asarray(h)
        if h.size > 1 and np.all(h == h[0]):
            raise DomainError(f"all H0 samples equal at t={t}; log-mean has no stderr")
        x = params.tau ** (s * h.astype(float))
        m, se = _mean_se(x)
        # delta method for (1/t) ln(mean)
        emp.append(McEstimate(math.log(m) / t, se / (t * m), n, seed))
        logm.append(math.log(m))
    logm = np.asarray(logm)
    if T.size >= 3:
        X = np.column_stack([T, np.log(T), np.ones_like(T)])
        coef, *_ = np.linalg.lstsq(X, logm, rcond=None)
        fit = {"shape": "slope*t + c*ln(t) + d", "slope": coef[0], "c": coef[1], "d": coef[2]}
    elif T.size == 2:
        coef = np.polyfit(T, logm, 1)
        fit = {"shape": "slope*t + d", "slope": coef[0], "d": coef[1]}
    else:
        fit = {"shape": "single point", "slope": logm[0] / T[0]}
    return LyapunovReport(s=float(s), t_grid=tuple(float(t) for t in T), empirical=tuple(emp),
                          exact=-h_q(params, s), extrapolated=float(fit["slope"]),
                          fit={k: (float(v) if not isinstance(v, str) else v) for k, v in fit.items()})


def estimate_lyapunov(params: ModelParams, s: float, t_grid, n_samples: int, seed: int,
                      workers: int | None = None, samples: AsepSamples | None = None) -> LyapunovReport:
    """Per-t log-moments from one batch with checkpoints at every grid time."""
    T = np.asarray(t_grid, dtype=float)
    if T.size == 0 or np.any(T <= 0) or np.any(np.diff(T) <= 0):
        raise DomainError("t_grid must be positive and strictly increasing")
    _check_n(n_samples, 2)
    if samples is None:
        samples = asep_samples(params.q, T, n_samples, seed, workers=workers)
    cols = [samples.h0_geq[:, c] for c in range(T.size)]
    return lyapunov_from_samples(params, s, T, cols, seed, int(n_samples))


def probability_estimate(hits: np.ndarray, seed: int, what: str = "tail") -> McEstimate:
    hits = np.asarray(hits, dtype=bool)
    n = hits.size
    k = int(hits.sum())
    p = k / n
    se = math.sqrt(p * (1 - p) / n)
    if k == 0:
        # Clopper-Pearson one-sided bound for zero successes
        ub = 1.0 - ZERO_HIT_ALPHA ** (1.0 / n)
        warnings.warn(f"{what}: no sample hit the event; P < {ub:.3g} at 95%",
                      RuntimeWarning, stacklevel=3)
        return McEstimate(0.0, 0.0, n, seed, upper_bound=ub)
    return McEstimate(p, se, n, seed)


def tail_event(h0: np.ndarray, t: float, y: float) -> np.ndarray:
    """Indicator of ``-H0 + t/4 > t y/4``."""
    return -np.asarray(h0, dtype=float) + t / 4.0 > t * y / 4.0


def tail_horizon(params: ModelParams, t: float) -> float:
    """The current is read at ``t / gamma``, gamma = 2q - 1."""
    return t / params.gamma


def estimate_tail(params: ModelParams, y: float, t: float, n_samples: int, seed: int,
                  workers: int | None = None) -> McEstimate:
    """Empirical ``P(-H0(t/gamma) + t/4 > t y/4)``."""
    _check_n(n_samples)
    if y >= 1:
        return McEstimate(0.0, 0.0, int(n_samples), seed)
    if not (t > 0):
        raise DomainError("t must be > 0")
    S = asep_samples(params.q, [tail_horizon(params, t)], n_samples, seed, workers=workers)
    return probability_estimate(tail_event(S.h0(), t, y), seed)


def empirical_rate(est: McEstimate, scale: float) -> float:
    """``-(1/scale) ln(mean)``; +inf for a zero estimate."""
    return math.inf if est.mean <= 0 else -math.log(est.mean) / scale


DISCRIMINATOR_GRID = ((0.5, 0.5), (0.5, 1.0), (0.5, 2.0), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0))


def convention_discriminator(params: ModelParams, t_small: float, n_samples: int, seed: int,
                             spec: ContourSpec | None = None, workers: int | None = None,
                             samples: AsepSamples | None = None):
    """Pick the H0 convention for which MC matches det(I+K) at every grid point.

    Grid: zeta in {0.5, 1} and t in {0.5, 1, 2} restricted to t <= t_small.
    Returns ``(convention, table)``; raises InconclusiveError if both or
    neither convention passes.
    """
    if not (0 < t_small <= 3):
        raise DomainError("t_small must lie in (0, 3]")
    grid = [(z, t) for z, t in DISCRIMINATOR_GRID if t <= t_small]
    if not grid:
        raise DomainError("no grid time is <= t_small")
    times = sorted({t for _, t in grid})
    spec = spec or ContourSpec(delta=0.5, w_nodes=128)
    if samples is None:
        samples = asep_samples(params.q, times, n_samples, seed, workers=workers)
    table = []
    ok = {H0Convention.GEQ_ZERO: True, H0Convention.GT_ZERO: True}
    for zeta, t in grid:
        det = fredholm_det(build_nystrom(params, 0, zeta, t, spec)).real
        c = times.index(t)
        row = {"zeta": zeta, "t": t, "det": det}
        for conv in ok:
            m, se = _mean_se(tau_laplace_values(params, zeta, samples.h0(conv, c)))
            good = abs(m - det) <= 3 * se + 1e-6
            ok[conv] &= bool(good)
            row[conv.value] = {"mean": m, "stderr": se, "pass": bool(good)}
        table.append(row)
    winners = [c for c, v in ok.items() if v]
    if len(winners) != 1:
        raise InconclusiveError(f"{len(winners)} conventions passed", table)
    return winners[0], table


def lpp_tail(N: int, z: float, n_samples: int, seed: int,
             workers: int | None = None) -> McEstimate:
    """Empirical ``P(H(N) >= N z)`` for exponential LPP."""
    if not (z >= 4):
        raise DomainError("z must be >= 4")
    _check_n(n_samples)
    v = lpp_values(N, n_samples, seed, workers)
    return probability_estimate(v >= N * z, seed, "lpp tail")


def lpp_rate_reference(z: float) -> float:
    return tasep_J(z)


def bridge_lpp_size(t: float, y: float) -> int:
    """``floor(t(1-y)/4) + 1``: the LPP corner matched to the TASEP event."""
    return int(math.floor(t * (1.0 - y) / 4.0)) + 1


def tasep_tail(y: float, t: float, n_samples: int, seed: int, workers: int | None = None,
               samples: AsepSamples | None = None, checkpoint: int = -1) -> McEstimate:
    """TASEP (q = 1) estimate of ``P(-H0(t) + t/4 >= t y/4)``."""
    if samples is None:
        samples = asep_samples(1.0, [t], n_samples, seed, workers=workers)
    h0 = samples.h0(H0Convention.GEQ_ZERO, checkpoint).astype(float)
    return probability_estimate(-h0 + t / 4.0 >= t * y / 4.0, seed, "tasep tail")


def bridge_lpp_tail(y: float, t: float, n_samples: int, seed: int,
                    workers: int | None = None) -> McEstimate:
    """``P(H(M_t) >= t)`` with ``M_t = bridge_lpp_size(t, y)``."""
    v = lpp_values(bridge_lpp_size(t, y), n_samples, seed, workers)
    return probability_estimate(v >= t, seed, "bridge lpp tail")


def joint_z(a: McEstimate, b: McEstimate) -> float:
    se = math.hypot(a.stderr, b.stderr)
    diff = a.mean - b.mean
    if se == 0:
        return 0.0 if diff == 0 else math.inf
    return diff / se


def tail_reference(y: float) -> float:
    return phi_plus(y)
