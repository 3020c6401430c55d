"""Regime scans and rate-function curves with run manifests.

Every number in a scan row carries a route tag (``routes`` column), and cells
that cannot be computed within the module ceilings are still emitted with a
feasibility flag. Cross-route disagreements are flagged the same way.
"""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .core import LatticeBox, ModelParams
from .errors import InvalidInputError
from .permanent import (
    CRITICAL,
    SUBCRITICAL,
    SUPERCRITICAL,
    PERMANENT_CEILING,
    asymptotic_log_perm,
    classify_regime,
    default_fd_step,
    log_partition,
    mean_displacement_fd,
)

SCHEMA_VERSION = 1
KERNEL_AGREEMENT = 1e-3
SIGMA_BAND = 3.0


@dataclass(frozen=True)
class ScanConfig:
    boxes: tuple[tuple[int, int], ...]  # (d, N) pairs
    betas: tuple[float, ...]
    mcmc_samples: int = 20_000
    mcmc_thinning: int = 10
    mcmc_burn_in: int | None = None
    mcmc_chains: int = 1
    gaussian_samples: int = 100_000
    permanent_ceiling: int = 24
    fd_delta: float | None = None
    kernel_nodes: int = 1024
    seed: int = 0
    workers: int = 1
    run_mcmc: bool = True
    run_gaussian: bool = True
    run_kernel: bool = True

    def cells(self) -> list[tuple[int, int, float]]:
        return [(d, N, float(b)) for d, N in self.boxes for b in self.betas]


@dataclass(frozen=True)
class CurveConfig:
    c_values: tuple[float, ...]
    tol: float = 1e-10


@dataclass
class RegimeRow:
    d: int
    N: int
    beta: float
    c: float
    regime: str
    log_perm_per_site: float = math.nan
    D_lower: float = math.nan
    D_upper: float = math.nan
    D_mcmc: float = math.nan
    D_se: float = math.nan
    log_E_gaussian: float = math.nan
    log_E_gaussian_se: float = math.nan
    log_E_kernel: float = math.nan
    prediction: float = math.nan
    prediction_source: str = ""
    D_prediction: float = math.nan
    flags: list[str] = field(default_factory=list)
    routes: dict[str, str] = field(default_factory=dict)

    COLUMNS = (
        "d", "N", "beta", "c", "regime", "log_perm_per_site", "D_lower", "D_upper",
        "D_mcmc", "D_se", "log_E_gaussian", "log_E_gaussian_se", "log_E_kernel",
        "prediction", "prediction_source", "D_prediction", "flags", "routes",
    )

    def as_record(self) -> dict:
        rec = {k: getattr(self, k) for k in self.COLUMNS if k not in ("flags", "routes")}
        rec["flags"] = ";".join(self.flags)
        rec["routes"] = ";".join(f"{k}={v}" for k, v in self.routes.items())
        return rec


@dataclass
class RunManifest:
    command: list[str]
    seeds: dict
    parameters: dict
    versions: dict
    started: str
    wall_clock_seconds: float = 0.0
    provenance: list[dict] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def begin(cls, command, seeds, parameters) -> "RunManifest":
        return cls(
            command=list(command),
            seeds=dict(seeds),
            parameters=_jsonable(parameters),
            versions=library_versions(),
            started=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )

    def finish(self, t0: float) -> None:
        self.wall_clock_seconds = round(time.perf_counter() - t0, 3)

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=_json_default))


def library_versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "srplab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def cell_seed(seed: int, index: int) -> int:
    """Independent per-cell seed, fixed by the run seed and the grid position."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0] >> 1)


def uniform_mean_displacement(box: LatticeBox) -> float:
    """Mean displacement per site of a uniform permutation: mean pairwise distance."""
    dist = box.distance_matrix()
    return math.fsum(dist.ravel()) / box.n_sites**2


def displacement_interval(box: LatticeBox, beta: float, delta: float | None = None, **kw):
    """``(lower, upper, route)``; at ``beta = 0`` the value is known in closed form."""
    if beta == 0:
        u = uniform_mean_displacement(box)
        return u, u, "uniform_closed_form"
    if delta is None:
        delta = default_fd_step(beta)
    delta = min(delta, beta / 2)
    lo, hi = mean_displacement_fd(box, beta, delta, **kw)
    return lo, hi, f"convexity_fd(delta={delta:g})"


def mean_displacement_prediction(d: int, N: int, beta: float) -> tuple[float, str]:
    """Leading-order mean displacement per site where a constant is available (d = 1)."""
    regime = classify_regime(beta, N)
    if d != 1:
        return math.nan, f"theta_only d={d}"
    if regime == SUBCRITICAL:
        return N / 3 - 1 / (3 * N), "subcritical N/3-1/(3N)"
    if regime == CRITICAL:
        from .ode import f_of_c

        return N * f_of_c(beta * N), "critical N*f(c)"
    if regime == SUPERCRITICAL:
        return 1 / beta, "supercritical 1/beta"
    return math.nan, "none"


def scan_cell(config: ScanConfig, index: int, d: int, N: int, beta: float) -> RegimeRow:
    box = LatticeBox(d, N)
    n = box.n_sites
    row = RegimeRow(d=d, N=N, beta=beta, c=beta * N, regime=classify_regime(beta, N))
    seed = cell_seed(config.seed, index)

    log_perm = None
    if n <= config.permanent_ceiling:
        log_perm = log_partition(box, beta).log_magnitude
        row.log_perm_per_site = log_perm / n
        row.routes["log_perm_per_site"] = "permanent_exact"
        lo, hi, route = displacement_interval(box, beta, config.fd_delta)
        row.D_lower, row.D_upper = lo, hi
        row.routes["D_interval"] = route
    else:
        row.flags.append(f"permanent_infeasible(n={n}>{config.permanent_ceiling})")

    if config.run_mcmc:
        from .mcmc import run_chain

        stats = run_chain(
            ModelParams(beta, box), config.mcmc_burn_in, config.mcmc_samples,
            config.mcmc_thinning, seed, chains=config.mcmc_chains,
        )
        row.D_mcmc, row.D_se = stats.displacement_mean, stats.displacement_se
        row.routes["D_mcmc"] = f"mcmc(seed={seed})"
        if log_perm is not None:
            band = SIGMA_BAND * row.D_se
            if not (row.D_lower - band <= row.D_mcmc <= row.D_upper + band):
                row.flags.append("mcmc_outside_interval")

    if config.run_gaussian:
        if beta <= 0:
            row.flags.append("gaussian_skipped(beta=0)")
        elif n > 12:
            row.flags.append(f"gaussian_skipped(n={n}>12)")
        else:
            from .gaussian import estimate_moment

            est = estimate_moment(box, beta, config.gaussian_samples, seed)
            row.log_E_gaussian, row.log_E_gaussian_se = est.log_mean, est.se_of_log
            row.routes["log_E_gaussian"] = f"gaussian_mc(seed={seed})"
            if log_perm is not None:
                exact = log_perm + n * math.log(2.0)
                if abs(est.log_mean - exact) > SIGMA_BAND * est.se_of_log:
                    row.flags.append("gaussian_outside_band")

    if config.run_kernel:
        if d != 1:
            row.flags.append("kernel_skipped(d>1)")
        elif beta <= 0 or N < 2:
            row.flags.append("kernel_skipped(beta=0 or N<2)")
        else:
            from .kernel import kernel_logE

            res = kernel_logE(beta, N, n_nodes=config.kernel_nodes)
            row.log_E_kernel = res.log_E
            row.routes["log_E_kernel"] = "kernel_expansion"
            if log_perm is not None:
                exact = log_perm + n * math.log(2.0)
                if abs(res.log_E - exact) > KERNEL_AGREEMENT * abs(exact):
                    row.flags.append("kernel_disagrees")

    pred = asymptotic_log_perm(d, N, beta, row.regime)
    if pred.value is not None:
        row.prediction = pred.value
    row.prediction_source = pred.source
    row.routes["prediction"] = pred.source
    row.D_prediction, src = mean_displacement_prediction(d, N, beta)
    row.routes["D_prediction"] = src
    return row


def _scan_cell_args(args):
    return scan_cell(*args)


def scan(config: ScanConfig) -> list[RegimeRow]:
    """Evaluate every (d, N, beta) cell; rows come back in grid order."""
    cells = config.cells()
    for d, N, beta in cells:
        if beta < 0 or not math.isfinite(beta):
            raise InvalidInputError(f"invalid beta {beta}")
        if config.permanent_ceiling > PERMANENT_CEILING:
            raise InvalidInputError(f"permanent ceiling cannot exceed {PERMANENT_CEILING}")
    args = [(config, k, d, N, b) for k, (d, N, b) in enumerate(cells)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            return list(pool.map(_scan_cell_args, args))
    return [scan_cell(*a) for a in args]


@dataclass
class CurveRow:
    c: float
    a: float
    g1: float
    vg1: float
    f: float
    boundary_residual: float
    first_integral_residual: float
    g1_error: float

    COLUMNS = ("c", "a", "g1", "vg1", "f", "boundary_residual", "first_integral_residual", "g1_error")


def curve_point(c: float, tol: float) -> CurveRow:
    from .ode import f_of_c, rate_terms, solve_bvp

    sol = solve_bvp(c, tol)
    g, v, err = rate_terms(sol)
    return CurveRow(
        c=c,
        a=sol.a,
        g1=g,
        vg1=v,
        f=f_of_c(c, tol=tol),
        boundary_residual=sol.boundary_residual,
        first_integral_residual=sol.first_integral_residual,
        g1_error=err,
    )


def curves(config: CurveConfig) -> list[CurveRow]:
    if not config.c_values or any(not c > 0 for c in config.c_values):
        raise InvalidInputError("c grid must be nonempty and positive")
    return [curve_point(float(c), config.tol) for c in config.c_values]


def write_csv(fh, columns, records, schema: str) -> None:
    """CSV with a leading ``# schema`` comment line; floats use repr precision."""
    fh.write(f"# schema: srplab.{schema}/{SCHEMA_VERSION}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([_fmt(rec[c]) for c in columns])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def csv_text(columns, records, schema: str) -> str:
    buf = io.StringIO()
    write_csv(buf, columns, records, schema)
    return buf.getvalue()


def read_csv(path_or_text: str) -> list[dict]:
    text = path_or_text
    if "\n" not in path_or_text:
        with open(path_or_text) as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def command_line() -> list[str]:
    return list(sys.argv)
