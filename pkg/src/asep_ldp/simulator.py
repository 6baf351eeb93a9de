"""Continuous-time ASEP from step initial data, and exponential LPP.

Both engines are numba kernels that run with the GIL released. Runs are
grouped into fixed-size blocks; block ``b`` draws from
``PCG64(SeedSequence(seed, spawn_key=(b,)))``, so a batch is a pure
function of ``(seed, n_samples)`` no matter how blocks are spread over
worker threads.
"""

from __future__ import annotations

import enum
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DomainError, TruncationError
from .exact_rates import ModelParams

BLOCK_SIZE = 4096


class H0Convention(str, enum.Enum):
    GEQ_ZERO = "geq"   # particles at sites >= 0
    GT_ZERO = "gt"     # particles at sites > 0


def mandated_truncation(horizon_t: float) -> int:
    return int(math.ceil(horizon_t) + 10 * math.ceil(math.sqrt(horizon_t)) + 20)


@dataclass(frozen=True)
class SimConfig:
    """One simulation setup.

    ``q`` may equal 1 (TASEP); ``params`` is then ``None`` because tau = 0
    is outside the ModelParams domain.
    """

    q: float
    horizon_t: float
    seed: int = 0
    truncation_M: int | None = None
    h0_convention: H0Convention = H0Convention.GEQ_ZERO
    M: int = field(init=False)

    def __post_init__(self):
        if not (0.5 < self.q <= 1.0):
            raise DomainError(f"q must lie in (1/2, 1], got {self.q!r}")
        if not (self.horizon_t >= 0 and math.isfinite(self.horizon_t)):
            raise DomainError(f"horizon must be finite and >= 0, got {self.horizon_t!r}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise DomainError("seed must be an unsigned 64-bit integer")
        need = mandated_truncation(self.horizon_t)
        M = need if self.truncation_M is None else int(self.truncation_M)
        if M < need:
            raise DomainError(f"truncation_M={M} below the mandated {need}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "h0_convention", H0Convention(self.h0_convention))

    @property
    def params(self) -> ModelParams | None:
        return None if self.q == 1.0 else ModelParams(self.q)


@dataclass(frozen=True)
class TrajectoryResult:
    h0: int
    n_events: int
    rightmost: int


@dataclass(frozen=True)
class LppResult:
    N: int
    value: float


@njit(nogil=True, cache=True)
def _asep_segment(rng, nev, M, q, off, occ, pos, state):
    # state = [n_geq, n_gt, bad]; occ is long enough for nev right jumps
    n_geq = state[0]
    n_gt = state[1]
    bad = state[2]
    last = M - 1
    for _ in range(nev):
        v = rng.random() * M
        i = int(v)
        if i > last:
            i = last
        x = pos[i]
        if (v - i) < q:
            k = x + 1 + off
            if occ[k] == 0:
                occ[k - 1] = 0
                occ[k] = 1
                pos[i] = x + 1
                if x == -1:
                    n_geq += 1
                elif x == 0:
                    n_gt += 1
                if i == last:
                    bad = 1
        else:
            k = x - 1 + off
            # k == 0 is the frozen sea left of the tracked particles
            if k > 0 and occ[k] == 0:
                occ[k + 1] = 0
                occ[k] = 1
                pos[i] = x - 1
                if x == 0:
                    n_geq -= 1
                elif x == 1:
                    n_gt -= 1
    state[0] = n_geq
    state[1] = n_gt
    state[2] = bad


@njit(nogil=True, cache=True)
def _asep_block(rng, n_runs, M, q, seg_rates, out_geq, out_gt, out_events, out_right, viol):
    n_seg = seg_rates.size
    off = M + 1
    occ = np.zeros(off + 64, dtype=np.uint8)
    pos = np.empty(M, dtype=np.int64)
    nevs = np.empty(n_seg, dtype=np.int64)
    state = np.zeros(3, dtype=np.int64)
    for r in range(n_runs):
        total = 0
        for c in range(n_seg):
            nevs[c] = rng.poisson(seg_rates[c])
            total += nevs[c]
        # the front particle cannot pass site total - 1
        if occ.size < off + total + 2:
            occ = np.zeros(off + total + 64, dtype=np.uint8)
        for j in range(M):
            pos[j] = -(j + 1)
            occ[off - j - 1] = 1
        state[0] = 0
        state[1] = 0
        state[2] = 0
        for c in range(n_seg):
            _asep_segment(rng, nevs[c], M, q, off, occ, pos, state)
            out_geq[r, c] = state[0]
            out_gt[r, c] = state[1]
        out_events[r] = total
        out_right[r] = pos[0]
        viol[r] = state[2]
        for j in range(M):
            occ[pos[j] + off] = 0


@njit(nogil=True, cache=True)
def _lpp_block(rng, n_runs, N, out):
    row = np.zeros(N, dtype=np.float64)
    for r in range(n_runs):
        for j in range(N):
            row[j] = 0.0
        for i in range(N):
            left = 0.0
            for j in range(N):
                up = row[j]
                best = up if up > left else left
                left = best + rng.standard_exponential()
                row[j] = left
        out[r] = row[N - 1]


@njit(nogil=True, cache=True)
def _lpp_diagonal(rng, N, out):
    # H(k, k) for k = 1..N on one N x N grid, filled row by row
    row = np.zeros(N, dtype=np.float64)
    for i in range(N):
        left = 0.0
        for j in range(N):
            up = row[j]
            best = up if up > left else left
            left = best + rng.standard_exponential()
            row[j] = left
            if j == i:
                out[i] = left


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(block,))))


def default_workers() -> int:
    env = os.environ.get("ASEP_LDP_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise DomainError(f"ASEP_LDP_WORKERS must be an integer, got {env!r}") from exc
    return 1


def _run_blocks(job, n_samples: int, workers: int | None):
    n_blocks = -(-n_samples // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, n_samples - b * BLOCK_SIZE) for b in range(n_blocks)]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or n_blocks <= 1:
        for b in range(n_blocks):
            job(b, b * BLOCK_SIZE, sizes[b])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: job(b, b * BLOCK_SIZE, sizes[b]), range(n_blocks)))


@dataclass
class AsepSamples:
    """Batch output. ``h0_geq[i, c]`` / ``h0_gt[i, c]`` are the counts at
    checkpoint ``times[c]`` of run i under each convention."""

    times: np.ndarray
    h0_geq: np.ndarray
    h0_gt: np.ndarray
    n_events: np.ndarray
    rightmost: np.ndarray
    violations: int

    def h0(self, convention=H0Convention.GEQ_ZERO, checkpoint: int = -1) -> np.ndarray:
        conv = H0Convention(convention)
        arr = self.h0_geq if conv is H0Convention.GEQ_ZERO else self.h0_gt
        return arr[:, checkpoint]


def asep_samples(q: float, times, n_samples: int, seed: int, M: int | None = None,
                 workers: int | None = None, check_truncation: bool = True) -> AsepSamples:
    """Run ``n_samples`` trajectories recording H0 at each checkpoint time."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise DomainError("checkpoint times must be nonnegative and strictly increasing")
    cfg = SimConfig(q=q, horizon_t=float(times[-1]), seed=seed, truncation_M=M)
    M = cfg.M
    seg = M * np.diff(np.concatenate([[0.0], times]))
    n = int(n_samples)
    if n < 0:
        raise DomainError("n_samples must be >= 0")
    geq = np.zeros((n, times.size), dtype=np.int64)
    gt = np.zeros((n, times.size), dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    right = np.zeros(n, dtype=np.int64)
    viol = np.zeros(n, dtype=np.uint8)

    def job(b, start, size):
        sl = slice(start, start + size)
        _asep_block(_block_rng(cfg.seed, b), size, M, float(q), seg,
                    geq[sl], gt[sl], events[sl], right[sl], viol[sl])

    _run_blocks(job, n, workers)
    nviol = int(viol.sum())
    if check_truncation and nviol:
        raise TruncationError(f"{nviol} runs moved the leftmost tracked particle (M={M})")
    return AsepSamples(times, geq, gt, events, right, nviol)


def asep_batch(cfg: SimConfig, n_samples: int, workers: int | None = None) -> list[TrajectoryResult]:
    if n_samples == 0:
        return []
    if cfg.horizon_t == 0:
        # step initial condition: nothing at the origin or to its right yet
        return [TrajectoryResult(0, 0, -1) for _ in range(n_samples)]
    s = asep_samples(cfg.q, [cfg.horizon_t], n_samples, cfg.seed, cfg.M, workers)
    h = s.h0(cfg.h0_convention)
    return [TrajectoryResult(int(a), int(b), int(c)) for a, b, c in zip(h, s.n_events, s.rightmost)]


def asep_run(cfg: SimConfig) -> TrajectoryResult:
    """Single trajectory; identical to the first entry of ``asep_batch(cfg, n)``."""
    return asep_batch(cfg, 1)[0]


def lpp_values(N: int, n_samples: int, seed: int, workers: int | None = None) -> np.ndarray:
    if N < 1:
        raise DomainError("N must be >= 1")
    out = np.zeros(int(n_samples), dtype=np.float64)

    def job(b, start, size):
        _lpp_block(_block_rng(seed, b), size, int(N), out[start:start + size])

    _run_blocks(job, int(n_samples), workers)
    return out


def lpp_sample(N: int, seed: int) -> LppResult:
    return LppResult(N=int(N), value=float(lpp_values(N, 1, seed)[0]))


def lpp_nested(N_max: int, seed: int) -> np.ndarray:
    """``H(k, k)`` for k = 1..N_max read off one shared weight grid."""
    out = np.zeros(int(N_max))
    _lpp_diagonal(_block_rng(seed, 0), int(N_max), out)
    return out


_RECORD = struct.Struct("<IQ")


def to_binary(results: list[TrajectoryResult]) -> bytes:
    """Little-endian records ``(h0: u32, n_events: u64)``."""
    return b"".join(_RECORD.pack(r.h0, r.n_events) for r in results)


def from_binary(blob: bytes) -> list[tuple[int, int]]:
    if len(blob) % _RECORD.size:
        raise DomainError("binary blob length is not a multiple of the record size")
    return [_RECORD.unpack_from(blob, i) for i in range(0, len(blob), _RECORD.size)]


def to_csv(results: list[TrajectoryResult]) -> str:
    lines = ["h0,n_events,rightmost"]
    lines += [f"{r.h0},{r.n_events},{r.rightmost}" for r in results]
    return "\r\n".join(lines) + "\r\n"
