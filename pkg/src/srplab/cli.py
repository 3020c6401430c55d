"""Command-line entry point: ``srplab <verb> [options]``.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 flagged rows under --strict.
"""
from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from .errors import InvalidInputError, NumericalDegeneracyError, SolverFailureError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_FLAGGED = 4


def _float_list(text: str) -> list[float]:
    """Comma list of values, or ``start:stop:step`` (inclusive of stop)."""
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise argparse.ArgumentTypeError(f"bad range {text!r}; use start:stop:step")
        count = int(math.floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1
        return [round(parts[0] + k * parts[2], 12) for k in range(count)]
    return [float(x) for x in text.split(",") if x]


def _box_list(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        d, _, N = item.partition("x")
        out.append((int(d), int(N)))
    return out


def _global_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--out", help="CSV output path (default: stdout)")
    g.add_argument("--manifest", help="write a JSON run manifest to this path")
    g.add_argument("--threads", type=int, default=None, help="worker threads for the permanent kernel")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--strict", action="store_true", help="exit 4 if any row carries a flag")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(prog="srplab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("perm", parents=[common], help="exact log-permanent and displacement interval")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--side", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--oracle", action="store_true", help="use brute-force enumeration (n <= 9)")

    p = sub.add_parser("sample", parents=[common], help="Metropolis estimate of the mean displacement")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--side", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--hist", help="histogram CSV path (default: <out>.hist.csv when --out is set)")

    p = sub.add_parser("gaussian", parents=[common], help="Gaussian-moment Monte Carlo")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--side", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--samples", type=int, default=100_000)

    p = sub.add_parser("ode", parents=[common], help="rate function from the boundary-value problem")
    p.add_argument("--c", type=_float_list, required=True, help="value, list a,b,c or range start:stop:step")
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("kernel", parents=[common], help="kernel-expansion route (d = 1)")
    p.add_argument("--side", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--radius", type=float, default=8.0)
    p.add_argument("--nodes", type=int, default=1024)

    p = sub.add_parser("scan", parents=[common], help="regime scan across all routes")
    p.add_argument("--boxes", type=_box_list, default=[(1, 8)], help="comma list of dxN, e.g. 1x8,2x3")
    p.add_argument("--betas", type=_float_list, default=[0.0, 0.1, 1.0])
    p.add_argument("--mcmc-samples", type=int, default=20_000)
    p.add_argument("--mcmc-thin", type=int, default=10)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--gaussian-samples", type=int, default=100_000)
    p.add_argument("--perm-ceiling", type=int, default=24)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-mcmc", action="store_true")
    p.add_argument("--no-gaussian", action="store_true")
    p.add_argument("--no-kernel", action="store_true")

    p = sub.add_parser("curves", parents=[common], help="f(c) and g1(c) over a c grid")
    p.add_argument("--c", type=_float_list, default=_float_list("0.1:10:0.1"))
    p.add_argument("--tol", type=float, default=1e-10)
    return parser


# --- verbs -------------------------------------------------------------------


def _perm(args):
    from .core import LatticeBox
    from .experiments import displacement_interval
    from .permanent import build_kms_matrix, permanent_bruteforce, permanent_exact, row_sum_upper_bound

    box = LatticeBox(args.dim, args.side)
    mat = build_kms_matrix(box, args.beta)
    if args.oracle:
        lp = permanent_bruteforce(mat).log_magnitude
        kw = {}
    else:
        lp = permanent_exact(mat, threads=args.threads).log_magnitude
        kw = {"threads": args.threads}
    lo, hi, _ = displacement_interval(box, args.beta, args.delta, **kw)
    rec = {
        "d": args.dim, "N": args.side, "beta": args.beta, "log_perm": lp,
        "per_site": lp / box.n_sites, "lower_D": lo, "upper_D": hi,
        "rowsum_bound": row_sum_upper_bound(mat).log_magnitude,
    }
    return "perm", list(rec), [rec], []


def _sample(args):
    from .core import LatticeBox, ModelParams
    from .mcmc import estimate_longest_cycle, run_chain

    params = ModelParams(args.beta, LatticeBox(args.dim, args.side))
    stats = run_chain(params, args.burnin, args.samples, args.thin, args.seed, chains=args.chains)
    rec = {
        "d": args.dim, "N": args.side, "beta": args.beta,
        "D_mean": stats.displacement_mean, "D_se": stats.displacement_se,
        "longest_cycle_mean": estimate_longest_cycle(stats).mean, "acc_rate": stats.acceptance_rate,
    }
    hist_path = args.hist or (args.out + ".hist.csv" if args.out else None)
    if hist_path:
        from .experiments import write_csv

        edges = stats.bin_edges
        rows = [
            {"bin_lower": float(edges[k]), "bin_upper": float(edges[k + 1]), "count": int(c)}
            for k, c in enumerate(stats.histogram)
        ]
        with open(hist_path, "w") as fh:
            write_csv(fh, ["bin_lower", "bin_upper", "count"], rows, "histogram")
    return "sample", list(rec), [rec], []


def _gaussian(args):
    from .core import LatticeBox
    from .gaussian import estimate_moment

    est = estimate_moment(LatticeBox(args.dim, args.side), args.beta, args.samples, args.seed)
    rec = {
        "d": args.dim, "N": args.side, "beta": args.beta, "log_E_estimate": est.log_mean,
        "se": est.se_of_log, "log_perm_implied": est.log_perm, "ess": est.ess,
    }
    return "gaussian", list(rec), [rec], []


def _ode(args):
    from .experiments import CurveConfig, curves

    rows = curves(CurveConfig(tuple(args.c), args.tol))
    cols = ["c", "a", "g1", "vg1", "f", "boundary_residual", "first_integral_residual"]
    return "ode", cols, [{k: getattr(r, k) for k in cols} for r in rows], []


def _kernel(args):
    from .kernel import (
        build_radial_operator,
        hilbert_schmidt_reference,
        hilbert_schmidt_squared,
        kernel_logE,
        principal_eigenvalue,
    )

    op = build_radial_operator(args.beta, args.radius, args.nodes)
    res = kernel_logE(args.beta, args.side, op=op)
    hs = hilbert_schmidt_squared(op)
    ref = hilbert_schmidt_reference(op.t)
    rec = {
        "N": args.side, "beta": args.beta, "log_E": res.log_E, "per_site": res.per_site,
        "lambda1": principal_eigenvalue(op), "hs_norm_check_rel_err": abs(hs - ref) / ref,
    }
    return "kernel", list(rec), [rec], []


def _scan(args):
    from .experiments import RegimeRow, ScanConfig, scan

    if args.threads:
        import numba

        numba.set_num_threads(args.threads)
    config = ScanConfig(
        boxes=tuple(args.boxes),
        betas=tuple(args.betas),
        mcmc_samples=args.mcmc_samples,
        mcmc_thinning=args.mcmc_thin,
        mcmc_chains=args.chains,
        gaussian_samples=args.gaussian_samples,
        permanent_ceiling=args.perm_ceiling,
        seed=args.seed,
        workers=args.workers,
        run_mcmc=not args.no_mcmc,
        run_gaussian=not args.no_gaussian,
        run_kernel=not args.no_kernel,
    )
    rows = scan(config)
    flags = [f for r in rows for f in r.flags]
    return "scan", list(RegimeRow.COLUMNS), [r.as_record() for r in rows], flags


def _curves(args):
    from .experiments import CurveConfig, CurveRow, curves

    rows = curves(CurveConfig(tuple(args.c), args.tol))
    cols = list(CurveRow.COLUMNS)
    recs = [{k: getattr(r, k) for k in cols} for r in rows]
    flags = []
    g = [r.g1 for r in rows]
    if any(b >= a for a, b in zip(g, g[1:])):
        flags.append("g1_not_decreasing")
    return "curves", cols, recs, flags


VERBS = {
    "perm": _perm,
    "sample": _sample,
    "gaussian": _gaussian,
    "ode": _ode,
    "kernel": _kernel,
    "scan": _scan,
    "curves": _curves,
}


def run(argv=None) -> int:
    from .experiments import RunManifest, write_csv

    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    manifest = RunManifest.begin(
        ["srplab"] + list(sys.argv[1:] if argv is None else argv),
        {"seed": args.seed},
        {k: v for k, v in vars(args).items() if k not in ("out", "manifest")},
    )
    try:
        schema, cols, recs, flags = VERBS[args.verb](args)
    except InvalidInputError as exc:
        print(f"srplab: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverFailureError, NumericalDegeneracyError) as exc:
        print(f"srplab: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.out:
        with open(args.out, "w") as fh:
            write_csv(fh, cols, recs, schema)
    else:
        write_csv(sys.stdout, cols, recs, schema)
    if args.manifest:
        manifest.provenance = [
            {"row": k, "routes": r.get("routes", args.verb), "flags": r.get("flags", "")}
            for k, r in enumerate(recs)
        ]
        manifest.finish(t0)
        manifest.write(args.manifest)
    if flags:
        print(f"srplab: {len(flags)} flag(s): {', '.join(sorted(set(flags)))}", file=sys.stderr)
        if args.strict:
            return EXIT_FLAGGED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
