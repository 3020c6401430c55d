import json
import math

import numpy as np
import pytest

from srplab.errors import InvalidInputError
from srplab.experiments import (
    CurveConfig,
    RegimeRow,
    RunManifest,
    ScanConfig,
    cell_seed,
    csv_text,
    curves,
    read_csv,
    scan,
    uniform_mean_displacement,
)
from srplab.core import LatticeBox
from srplab.ode import g1
from srplab.permanent import classify_regime


def test_uniform_row_one_dimension():
    row = scan(ScanConfig(boxes=((1, 8),), betas=(0.0,), mcmc_samples=50_000, seed=3))[0]
    assert abs(row.D_mcmc - (8 / 3 - 1 / 24)) <= 3 * row.D_se
    assert row.log_perm_per_site == pytest.approx(math.lgamma(9) / 8, abs=1e-12)
    assert row.D_lower == row.D_upper == pytest.approx(8 / 3 - 1 / 24, abs=1e-12)
    assert row.regime == "subcritical"
    assert "gaussian_skipped(beta=0)" in row.flags


def test_critical_row_tracks_rate_function():
    row = scan(ScanConfig(boxes=((1, 24),), betas=(1 / 24,), run_mcmc=False, run_gaussian=False))[0]
    assert row.c == pytest.approx(1.0)
    assert row.regime == "critical"
    assert abs(row.log_perm_per_site - math.lgamma(25) / 24 - g1(1.0)) <= 0.15
    assert row.flags == []


def test_two_dimensional_small_beta_row_is_order_N():
    cfg = ScanConfig(
        boxes=((2, 5),), betas=(0.05,), permanent_ceiling=25, mcmc_samples=20_000,
        run_gaussian=False,
    )
    row = scan(cfg)[0]
    assert row.regime == classify_regime(0.05, 5)
    assert row.D_lower <= row.D_upper
    assert 5 / 4 <= row.D_lower and row.D_upper <= 4 * 5
    assert row.D_upper <= uniform_mean_displacement(LatticeBox(2, 5))
    assert "mcmc_outside_interval" not in row.flags


def test_infeasible_cells_are_flagged_not_dropped():
    cfg = ScanConfig(boxes=((2, 5), (1, 13)), betas=(0.3,), mcmc_samples=1000, gaussian_samples=1000)
    rows = scan(cfg)
    assert [(r.d, r.N) for r in rows] == [(2, 5), (1, 13)]
    assert any(f.startswith("permanent_infeasible") for f in rows[0].flags)
    assert any(f.startswith("gaussian_skipped") for f in rows[0].flags)
    assert "kernel_skipped(d>1)" in rows[0].flags
    assert math.isnan(rows[0].log_perm_per_site)
    assert math.isfinite(rows[0].D_mcmc)


def test_every_number_has_a_route():
    row = scan(ScanConfig(boxes=((1, 6),), betas=(0.4,), mcmc_samples=5000, gaussian_samples=5000))[0]
    for key in ("log_perm_per_site", "D_interval", "D_mcmc", "log_E_gaussian", "log_E_kernel", "prediction"):
        assert key in row.routes
    assert row.flags == []
    rec = row.as_record()
    assert set(rec) == set(RegimeRow.COLUMNS)


def test_scan_rejects_bad_grids():
    with pytest.raises(InvalidInputError):
        scan(ScanConfig(boxes=((1, 4),), betas=(-0.1,)))
    with pytest.raises(InvalidInputError):
        scan(ScanConfig(boxes=((1, 4),), betas=(0.1,), permanent_ceiling=31))


def test_scan_is_deterministic_and_order_stable():
    cfg = ScanConfig(boxes=((1, 4), (1, 5)), betas=(0.2, 1.0), mcmc_samples=3000, gaussian_samples=2000, seed=7)
    a = [r.as_record() for r in scan(cfg)]
    b = [r.as_record() for r in scan(cfg)]
    assert csv_text(RegimeRow.COLUMNS, a, "scan") == csv_text(RegimeRow.COLUMNS, b, "scan")
    assert [(r["N"], r["beta"]) for r in a] == [(4, 0.2), (4, 1.0), (5, 0.2), (5, 1.0)]


def test_cell_seeds_distinct():
    seeds = {cell_seed(0, k) for k in range(100)}
    assert len(seeds) == 100
    assert cell_seed(1, 0) != cell_seed(0, 0)


def test_curves_shape_and_identities():
    rows = curves(CurveConfig((0.01, 0.1, 0.5, 1.0, 2.0, 5.0)))
    g = np.array([r.g1 for r in rows])
    f = np.array([r.f for r in rows])
    assert np.all(np.diff(g) < 0)
    assert np.all(np.diff(f) <= 1e-7)
    assert abs(rows[0].f - 1 / 3) <= 0.02
    for r in rows:
        assert r.vg1 - r.g1 == pytest.approx(math.log(2) - 1, abs=1e-12)
        assert r.boundary_residual <= 1e-10


def test_curves_reject_nonpositive_grid():
    with pytest.raises(InvalidInputError):
        curves(CurveConfig((0.5, 0.0)))
    with pytest.raises(InvalidInputError):
        curves(CurveConfig(()))


def test_csv_schema_header_and_roundtrip():
    recs = [{"a": 1, "b": 0.1 + 0.2}, {"a": 2, "b": math.nan}]
    text = csv_text(["a", "b"], recs, "demo")
    assert text.splitlines()[0] == "# schema: srplab.demo/1"
    back = read_csv(text)
    assert float(back[0]["b"]) == 0.1 + 0.2
    assert math.isnan(float(back[1]["b"]))


def test_manifest_contents(tmp_path):
    m = RunManifest.begin(["srplab", "scan"], {"seed": 5}, {"betas": (0.1, np.float64(0.2))})
    m.finish(0.0)
    path = tmp_path / "m.json"
    m.write(str(path))
    data = json.loads(path.read_text())
    assert data["seeds"] == {"seed": 5}
    assert data["parameters"]["betas"] == [0.1, 0.2]
    assert {"numpy", "scipy", "numba", "srplab", "python"} <= set(data["versions"])
    assert data["schema_version"] == 1
