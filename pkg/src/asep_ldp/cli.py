"""Command-line entry point: ``asep-ldp <command> [options]``.

Commands: rates, verify, lyapunov, tail, lpp, leading-term.
Exit codes: 0 success, 2 usage/domain error, 3 numerical non-convergence,
4 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, reports
from .errors import (DomainError, InconclusiveError, OptimizationError, QuadratureError,
                     TruncationError)

log = logging.getLogger("asep_ldp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


class UsageError(Exception):
    pass


class VerificationFailed(Exception):
    pass


def parse_grid(text, name, cast=float):
    if text is None:
        return []
    if isinstance(text, (int, float)):
        return [cast(text)]
    try:
        vals = [cast(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"--{name}: malformed grid {text!r}") from exc
    if not vals:
        raise UsageError(f"--{name}: empty grid")
    return vals


def read_config(path) -> dict:
    """``key = value`` lines; '#' starts a comment. Keys use flag names."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


DEFAULTS = {
    "q": "0.7", "format": "json", "samples": "100000", "budget": "600",
    "workers": None, "seed": None, "out": None,
}


def merged(args) -> dict:
    """Flags override config values, which override built-in defaults."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for k, v in vars(args).items():
        if k in ("func", "config"):
            continue
        if v is not None:
            out[k] = v
        elif k in cfg:
            out[k] = cfg[k]
        else:
            out[k] = DEFAULTS.get(k)
    if out.get("workers") is None:
        out["workers"] = os.environ.get("ASEP_LDP_WORKERS", "1")
    return out


def as_int(opts, key, minimum=None):
    try:
        v = int(opts[key])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--{key} must be an integer, got {opts[key]!r}") from exc
    if minimum is not None and v < minimum:
        raise UsageError(f"--{key} must be >= {minimum}")
    return v


def as_float(opts, key):
    try:
        return float(opts[key])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--{key} must be a number, got {opts[key]!r}") from exc


def resolve_seed(opts) -> int:
    if opts.get("seed") is None:
        # drawn once, then recorded in the manifest
        return int(np.random.SeedSequence().entropy % (2 ** 64))
    s = as_int(opts, "seed", 0)
    if s >= 2 ** 64:
        raise UsageError("--seed must fit in 64 bits")
    return s


def params_of(opts):
    from .exact_rates import ModelParams
    try:
        return ModelParams(as_float(opts, "q"))
    except DomainError as exc:
        raise UsageError(str(exc)) from exc


@dataclass
class Outcome:
    command: str
    parameters: dict
    seed: int | None
    report: dict
    rows: list
    summary: str
    passed: bool = True


def write_outputs(outcome: Outcome, opts) -> list[str]:
    """Write report, table and manifest atomically; nothing is left on failure."""
    fmt = opts["format"]
    out_dir = opts.get("out")
    table = reports.csv_text(outcome.rows) if fmt == "csv" else reports.dumps({"rows": outcome.rows})
    if out_dir is None:
        sys.stdout.write(table)
        return []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = outcome.command.replace("-", "_")
    files = {
        out / f"{stem}_report.json": reports.dumps(outcome.report),
        out / f"{stem}_table.{'csv' if fmt == 'csv' else 'json'}": table,
    }
    manifest_path = out / f"{stem}_manifest.json"
    params_for_hash = dict(outcome.parameters)
    manifest = {
        "command": outcome.command,
        "parameters": outcome.parameters,
        "seed": outcome.seed,
        "versions": {
            "asep_ldp": __version__,
            "numpy": np.__version__,
            "config_hash": reports.config_hash(params_for_hash),
        },
        "outputs": [p.name for p in files] + [manifest_path.name],
    }
    files[manifest_path] = reports.dumps(manifest)
    tmp = []
    try:
        for path, text in files.items():
            t = path.with_name(path.name + ".part")
            t.write_bytes(text.encode("utf-8"))
            tmp.append((t, path))
        for t, path in tmp:
            os.replace(t, path)
    except Exception:
        for t, _ in tmp:
            t.unlink(missing_ok=True)
        raise
    return [str(p) for p in files]


# commands ----------------------------------------------------------------

def cmd_rates(opts) -> Outcome:
    from . import exact_rates as er
    P = params_of(opts)
    ys = parse_grid(opts.get("y"), "y")
    ss = parse_grid(opts.get("s"), "s")
    if not ys and not ss:
        raise UsageError("rates needs --y and/or --s")
    rows = []
    for s in ss:
        if not (s > 0):
            raise UsageError(f"--s values must be > 0, got {s}")
        rows.append({"q": P.q, "y": None, "s": s, "h_q": er.h_q(P, s), "B_q": er.B_q(P, s),
                     "phi_plus": None, "s_star": None, "J": None})
    for y in ys:
        if not (0 < y < 1):
            raise UsageError(f"--y values must lie in (0, 1), got {y}")
        rep = er.legendre_dual(P, y)
        rows.append({"q": P.q, "y": y, "s": None, "h_q": None, "B_q": None,
                     "phi_plus": rep.phi_plus, "s_star": rep.s_star,
                     "J": er.tasep_J(4.0 / (1.0 - y))})
    params = {"q": P.q, "y": ys, "s": ss}
    return Outcome("rates", params, None, {"inputs": params, "rows": rows}, rows,
                   f"rates: {len(rows)} rows")


def _check(name, measured, tol, ok=None):
    passed = bool(abs(measured) <= tol) if ok is None else bool(ok)
    return {"check": name, "measured": float(measured), "tolerance": float(tol), "pass": passed}


def suite_duality(P, opts):
    from . import exact_rates as er
    out = []
    for y in np.round(np.arange(0.05, 0.951, 0.05), 10):
        r = er.legendre_dual(P, float(y))
        out.append(_check(f"dual gap y={y:g}", r.dual_value - r.phi_plus, 1e-10))
        out.append(_check(f"argmax y={y:g}", r.s_numeric - r.s_star, 1e-6))
    return out


def suite_asymptotics(P, opts):
    from . import exact_rates as er
    out = []
    for y in (1e-2, 1e-4, 1e-6):
        out.append(_check(f"ratio-2/3 at y={y:g}", er.phi_asymptotic_ratio(y) - 2 / 3, 1e-3 if y < 1e-3 else 1e-2))
    ys = np.logspace(-8, -0.5, 40)
    rs = np.array([er.phi_asymptotic_ratio(float(y)) for y in ys])
    out.append(_check("ratio decreases toward 2/3 as y -> 0", float(np.max(np.diff(rs), initial=0.0)), 0.0,
                      ok=bool(np.all(np.diff(rs) > 0))))
    return out


def suite_appendix(P, opts):
    from . import exact_rates as er
    out = []
    for y in np.round(np.arange(0.1, 0.91, 0.1), 10):
        out.append(_check(f"J identity y={y:g}",
                          (1 - y) / 4 * er.tasep_J(4 / (1 - y)) - er.phi_plus(float(y)), 1e-10))
    for t in (4.5, 5, 6, 8, 12):
        out.append(_check(f"GV integral t={t}", er.tasep_GV_integral(t) - er.tasep_J(t), 1e-8))
    out.append(_check("MP mass", er.mp_total_mass() - 1.0, 1e-8))
    return out


def suite_trace_derivative(P, opts):
    from .fredholm import build_nystrom, dzeta_exterior_trace, exterior_trace, trace_Kn
    from .kernel import ContourSpec
    t = as_float(opts, "t") if opts.get("t") is not None else 1.0
    spec = ContourSpec(delta=0.5, w_nodes=64)
    zeta, h = 1.0, 1e-3
    out = []
    for n in (0, 1):
        fd = (trace_Kn(P, n, zeta + h, t, spec) - trace_Kn(P, n, zeta - h, t, spec)) / (2 * h)
        out.append(_check(f"d/dzeta tr K^({n}) vs tr K^({n + 1})",
                          abs(fd - trace_Kn(P, n + 1, zeta, t, spec)), 1e-5))
    fd = (exterior_trace(build_nystrom(P, 0, zeta + h, t, spec), 2)
          - exterior_trace(build_nystrom(P, 0, zeta - h, t, spec), 2)) / (2 * h)
    out.append(_check("d/dzeta tr K^{wedge 2} vs mixed-order sum",
                      abs(fd - dzeta_exterior_trace(P, 2, 1, zeta, t, spec)), 1e-5))
    return out


def suite_fredholm(P, opts):
    from .estimator import tau_laplace_values
    from .fredholm import build_nystrom, fredholm_det
    from .kernel import ContourSpec
    from .simulator import asep_samples
    t = as_float(opts, "t") if opts.get("t") is not None else 1.0
    n = as_int(opts, "samples", 100)
    seed = opts["_seed"]
    S = asep_samples(P.q, [t], n, seed, workers=as_int(opts, "workers", 1))
    out = []
    for zeta in (0.5, 1.0, 2.0):
        det = fredholm_det(build_nystrom(P, 0, zeta, t, ContourSpec(delta=0.5, w_nodes=128))).real
        x = tau_laplace_values(P, zeta, S.h0())
        m, se = float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
        c = _check(f"det vs MC zeta={zeta:g} t={t:g}", m - det, 3 * se + 1e-6)
        c["z_score"] = (m - det) / se if se > 0 else 0.0
        out.append(c)
    return out


SUITES = {
    "duality": suite_duality,
    "asymptotics": suite_asymptotics,
    "fredholm": suite_fredholm,
    "trace-derivative": suite_trace_derivative,
    "appendix": suite_appendix,
}


def cmd_verify(opts) -> Outcome:
    suite = opts["suite"]
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    P = params_of(opts)
    budget = as_float(opts, "budget")
    seed = resolve_seed(opts) if suite == "fredholm" else None
    opts["_seed"] = seed
    start = time.monotonic()
    checks = SUITES[suite](P, opts)
    elapsed = time.monotonic() - start
    over = elapsed > budget
    passed = all(c["pass"] for c in checks) and not over
    params = {"suite": suite, "q": P.q, "t": opts.get("t"), "samples": opts.get("samples"),
              "budget": budget}
    report = {"inputs": params, "checks": checks, "budget_exceeded": over, "pass": passed}
    nfail = sum(not c["pass"] for c in checks)
    summary = f"verify {suite}: {'PASS' if passed else 'FAIL'} ({len(checks) - nfail}/{len(checks)} checks)"
    if over:
        summary += f"; budget {budget:g}s exceeded"
    return Outcome("verify", params, seed, report, checks, summary, passed)


def cmd_lyapunov(opts) -> Outcome:
    from .estimator import estimate_lyapunov
    P = params_of(opts)
    ss = parse_grid(opts.get("s"), "s")
    ts = parse_grid(opts.get("t"), "t")
    if not ss or not ts:
        raise UsageError("lyapunov needs --s and --t")
    if any(s <= 0 for s in ss) or any(t <= 0 for t in ts) or any(np.diff(ts) <= 0):
        raise UsageError("--s must be > 0 and --t positive increasing")
    n = as_int(opts, "samples", 2)
    seed = resolve_seed(opts)
    from .simulator import asep_samples
    S = asep_samples(P.q, ts, n, seed, workers=as_int(opts, "workers", 1))
    rows, reps = [], []
    for s in ss:
        r = estimate_lyapunov(P, s, ts, n, seed, samples=S)
        reps.append(r)
        for t, e in zip(r.t_grid, r.empirical):
            rows.append({"s": s, "t": t, "empirical": e.mean, "stderr": e.stderr,
                         "exact": r.exact, "extrapolated": r.extrapolated,
                         "z_score": e.z_score(r.exact)})
    params = {"q": P.q, "s": ss, "t": ts, "samples": n}
    summary = "; ".join(f"s={r.s:g}: extrapolated {r.extrapolated:.6g} vs exact {r.exact:.6g}"
                        for r in reps)
    return Outcome("lyapunov", params, seed, {"inputs": params, "results": reps}, rows, summary)


def cmd_tail(opts) -> Outcome:
    from .estimator import empirical_rate, probability_estimate, tail_event, tail_horizon
    from .exact_rates import phi_plus
    from .simulator import asep_samples
    P = params_of(opts)
    ys = parse_grid(opts.get("y"), "y")
    ts = parse_grid(opts.get("t"), "t")
    if not ys or not ts or any(t <= 0 for t in ts) or any(np.diff(ts) <= 0):
        raise UsageError("tail needs --y and positive increasing --t")
    n = as_int(opts, "samples", 1)
    seed = resolve_seed(opts)
    S = asep_samples(P.q, [tail_horizon(P, t) for t in ts], n, seed,
                     workers=as_int(opts, "workers", 1))
    rows = []
    for y in ys:
        for c, t in enumerate(ts):
            if y >= 1:
                rows.append({"y": y, "t": t, "probability": 0.0, "stderr": 0.0, "n": n,
                             "rate": math.inf, "exact_reference": None, "upper_bound": None})
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                e = probability_estimate(tail_event(S.h0(checkpoint=c), t, y), seed)
            ref = phi_plus(y) if 0 < y < 1 else None
            rows.append({"y": y, "t": t, "probability": e.mean, "stderr": e.stderr, "n": n,
                         "rate": empirical_rate(e, t), "exact_reference": ref,
                         "upper_bound": e.upper_bound})
    params = {"q": P.q, "y": ys, "t": ts, "samples": n}
    summary = "; ".join(f"y={r['y']:g} t={r['t']:g}: rate {r['rate']:.4g} vs {r['exact_reference']}"
                        for r in rows)
    return Outcome("tail", params, seed, {"inputs": params, "rows": rows}, rows, summary)


def cmd_lpp(opts) -> Outcome:
    from .estimator import empirical_rate, probability_estimate
    from .exact_rates import tasep_J
    from .simulator import lpp_values
    Ns = parse_grid(opts.get("N"), "N", int)
    zs = parse_grid(opts.get("z"), "z")
    if not Ns or not zs or any(N < 1 for N in Ns) or any(z < 4 for z in zs):
        raise UsageError("lpp needs --N >= 1 and --z >= 4")
    n = as_int(opts, "samples", 1)
    seed = resolve_seed(opts)
    rows = []
    for N in Ns:
        v = lpp_values(N, n, seed, as_int(opts, "workers", 1))
        for z in zs:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                e = probability_estimate(v >= N * z, seed)
            rows.append({"N": N, "z": z, "probability": e.mean, "stderr": e.stderr, "n": n,
                         "rate": empirical_rate(e, N), "exact_reference": tasep_J(z),
                         "upper_bound": e.upper_bound, "mean_over_N": float(v.mean() / N)})
    params = {"N": Ns, "z": zs, "samples": n}
    summary = "; ".join(f"N={r['N']} z={r['z']:g}: rate {r['rate']:.4g} vs J {r['exact_reference']:.6g}"
                        for r in rows)
    return Outcome("lpp", params, seed, {"inputs": params, "rows": rows}, rows, summary)


def cmd_leading_term(opts) -> Outcome:
    from .exact_rates import FractionalOrder, h_q
    from .fredholm import (LeadingTermParams, finite_window_factor, leading_term_A,
                           steepest_descent_C0, trace_laplace_C0)
    P = params_of(opts)
    ss = parse_grid(opts.get("s"), "s")
    ts = parse_grid(opts.get("t"), "t")
    if not ss or not ts or any(t <= 0 for t in ts) or any(s <= 0 for s in ss):
        raise UsageError("leading-term needs positive --s and --t")
    rows = []
    for s in ss:
        o = FractionalOrder(s)
        c0 = steepest_descent_C0(P, o).real
        c0r = trace_laplace_C0(P, o).real
        for t in ts:
            A = leading_term_A(P, LeadingTermParams(o, t))
            r = math.sqrt(t) * math.exp(t * h_q(P, s)) * A.real
            rows.append({"s": s, "t": t, "re_A": A.real, "im_A": A.imag, "ratio": r,
                         "C0": c0, "rel_gap_C0": abs(r - c0) / c0,
                         "C0_laplace": c0r, "rel_gap_laplace": abs(r - c0r) / c0r,
                         "window_factor": finite_window_factor(P, o, t)})
    params = {"q": P.q, "s": ss, "t": ts}
    summary = "; ".join(f"s={r['s']:g} t={r['t']:g}: ratio {r['ratio']:.6g} (C0 {r['C0']:.6g})"
                        for r in rows)
    return Outcome("leading-term", params, None, {"inputs": params, "rows": rows}, rows, summary)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", help="64-bit RNG seed (drawn and recorded if omitted)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--workers", help="worker threads (default $ASEP_LDP_WORKERS or 1)")
    common.add_argument("--config", help="key = value defaults file")
    common.add_argument("--out", help="directory for report, table and manifest files")
    common.add_argument("-v", "--verbose", action="store_true", default=None)

    p = argparse.ArgumentParser(prog="asep-ldp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("rates", parents=[common], help="exact exponents and rate functions")
    r.add_argument("--q")
    r.add_argument("--y", help="comma-separated y grid in (0,1)")
    r.add_argument("--s", help="comma-separated s grid, s > 0")
    r.set_defaults(func=cmd_rates)

    v = sub.add_parser("verify", parents=[common], help="run an invariant battery")
    v.add_argument("suite")
    v.add_argument("--q")
    v.add_argument("--t")
    v.add_argument("--samples")
    v.add_argument("--budget", help="seconds")
    v.set_defaults(func=cmd_verify)

    ly = sub.add_parser("lyapunov", parents=[common], help="MC Lyapunov exponents")
    ly.add_argument("--q")
    ly.add_argument("--s")
    ly.add_argument("--t")
    ly.add_argument("--samples")
    ly.set_defaults(func=cmd_lyapunov)

    ta = sub.add_parser("tail", parents=[common], help="MC upper-tail probabilities")
    ta.add_argument("--q")
    ta.add_argument("--y")
    ta.add_argument("--t")
    ta.add_argument("--samples")
    ta.set_defaults(func=cmd_tail)

    lp = sub.add_parser("lpp", parents=[common], help="MC last-passage tails")
    lp.add_argument("--N")
    lp.add_argument("--z")
    lp.add_argument("--samples")
    lp.set_defaults(func=cmd_lpp)

    lt = sub.add_parser("leading-term", parents=[common], help="leading-term quadrature")
    lt.add_argument("--q")
    lt.add_argument("--s")
    lt.add_argument("--t")
    lt.set_defaults(func=cmd_leading_term)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = merged(args)
        outcome = args.func(opts)
        write_outputs(outcome, opts)
    except (UsageError, DomainError) as exc:
        print(f"asep-ldp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, OptimizationError, TruncationError) as exc:
        print(f"asep-ldp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InconclusiveError as exc:
        print(f"asep-ldp: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    print(outcome.summary, file=sys.stdout if opts.get("out") else sys.stderr)
    return EXIT_OK if outcome.passed else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
