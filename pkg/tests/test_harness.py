import json
import math

import numpy as np
import pytest

from wavegrad.field import BoxDomain, TestFunction, catalog, make_grid
from wavegrad.harness import (
    HarnessError,
    SweepReport,
    alpha_sweep,
    analysis_grid,
    coefficient_of_variation,
    complexity_bench,
    decay_check,
    fit_loglog,
    geometric_taus,
    l1_error,
    n_rate_1d,
    oracle_ball_mass,
    reference_density,
    spa_agreement,
    tau_sweep,
)
from wavegrad.spa import CriticalValueError, oracle_density_grid
from wavegrad.wavefn import BallRegion, BinGrid, GradientDensity, choose_tau

Q1 = catalog("quadratic1d")
COS = catalog("cosine1d")
ARCSINE_05 = 1 / (math.pi * math.sqrt(0.75))


def flat(value, grid=BinGrid.symmetric(1.0, 20)):
    return GradientDensity.on_grid(grid, np.full(grid.shape, value))


# ---------------------------------------------------------------- metrics

def test_l1_examples():
    a, b = flat(0.5), flat(0.45)
    assert l1_error(a, a) == 0.0
    assert l1_error(a, b) == pytest.approx(0.1)
    assert l1_error(a, b) == l1_error(b, a)


def test_l1_mask_and_grid_mismatch():
    a, b = flat(0.5), flat(0.45)
    mask = np.zeros(20, bool)
    mask[:10] = True
    assert l1_error(a, b, mask) == pytest.approx(0.05)
    with pytest.raises(HarnessError):
        l1_error(a, flat(0.5, BinGrid.symmetric(1.0, 21)))


def test_fit_loglog_recovers_power_law():
    x = np.array([1.0, 2, 4, 8, 16])
    fit = fit_loglog(x, 3 * x**-1.5)
    assert fit["slope"] == pytest.approx(-1.5)
    assert fit["intercept"] == pytest.approx(math.log(3))
    assert fit["r2"] == pytest.approx(1.0)
    with pytest.raises(HarnessError):
        fit_loglog([1, 2], [1, 0])


def test_geometric_taus():
    assert geometric_taus(0.1, 3) == [0.8, 0.4, 0.2, 0.1]


def test_sweep_report_invariants(tmp_path):
    with pytest.raises(HarnessError):
        SweepReport("tau_sweep", [1, 2, 2], {"x": [1, 2, 3]})
    with pytest.raises(HarnessError):
        SweepReport("tau_sweep", [1, 2, 3], {"x": [1, 2]})
    rep = SweepReport("n_sweep", [8, 4, 2], {"l1": [0.1, 0.2, 0.4]}, verdict={"ok": True})
    blob = json.loads(rep.to_json(tmp_path / "r.json"))
    assert blob["passed"] and blob["axis"] == [8.0, 4.0, 2.0]
    rep.to_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "kind,axis,metric,value" and len(rows) == 4


def test_analysis_grid_and_oracle_mass():
    grid = analysis_grid(COS)
    assert grid.lo == (-1.25,) and grid.bins == (64,)
    assert oracle_ball_mass(Q1, None, BallRegion((0.3,), 0.05)) == pytest.approx(0.05, abs=1e-12)
    exact = (math.asin(0.55) - math.asin(0.45)) / math.pi
    assert oracle_ball_mass(COS, None, BallRegion((0.5,), 0.05)) == pytest.approx(exact, rel=1e-9)


@pytest.mark.parametrize("name,bins", [("quadratic1d", 64), ("cosine1d", 64), ("doublewell1d", 128)])
def test_masked_fraction_at_most_5pct(name, bins):
    f = catalog(name)
    ref = reference_density(f, None, analysis_grid(f, bins))
    assert ref.mask.mean() <= 0.05


def test_masked_fraction_quadratic2d():
    # in 2-D the masked bins trace the edge of the gradient image, so the fraction falls like 1/bins;
    # two nodes per axis are enough to see the count change across a bin
    f = catalog("quadratic2d")
    ref = oracle_density_grid(f, None, analysis_grid(f, 64), seeds_per_axis=4, quad_nodes=2)
    assert ref.mask.mean() <= 0.05


# ---------------------------------------------------------------- tau sweep

def test_tau_sweep_quadratic_ball_mass():
    grid = make_grid(1 << 16, Q1.domain)
    region = BallRegion((0.3,), 0.05)
    taus = geometric_taus(choose_tau(grid, 1.0), 8)
    rep = tau_sweep(Q1, None, grid, taus, region)
    assert rep.summary["oracle_ball_mass"] == pytest.approx(0.05)
    err = rep.metrics["ball_mass_error"]
    assert err[-1] < err[0]
    assert rep.summary["final_ball_mass_error"] <= 0.005
    assert rep.summary["l1_monotone_within_10pct"]


def test_tau_sweep_cosine_order_of_limits():
    grid = make_grid(1 << 16, COS.domain)
    region = BallRegion((0.5,), 0.05)
    taus = geometric_taus(choose_tau(grid, 1.0), 8)
    rep = tau_sweep(COS, None, grid, taus, region)
    assert rep.summary["pointwise_cv"] > 0.2
    assert rep.summary["ball_cv"] < 0.05


def test_tau_sweep_errors():
    grid = make_grid(1024, Q1.domain)
    with pytest.raises(HarnessError):
        tau_sweep(Q1, None, grid, [], BallRegion((0.3,), 0.05))
    with pytest.raises(HarnessError, match="Nyquist"):
        tau_sweep(Q1, None, grid, [1e-6], BallRegion((0.3,), 0.05))


def test_sweeps_are_reproducible():
    grid = make_grid(4096, COS.domain)
    taus = geometric_taus(choose_tau(grid, 1.0), 3)
    a = tau_sweep(COS, None, grid, taus, BallRegion((0.5,), 0.1))
    b = tau_sweep(COS, None, grid, taus, BallRegion((0.5,), 0.1))
    assert a.metrics == b.metrics


# ---------------------------------------------------------------- alpha sweep

def test_alpha_sweep_quadratic():
    grid = make_grid(1 << 16, Q1.domain)
    rep = alpha_sweep(Q1, None, grid, choose_tau(grid, 1.4), 0.0, [0.4, 0.2, 0.1, 0.05])
    np.testing.assert_allclose(rep.metrics["ball_mean"], 0.5, atol=0.03)


def test_alpha_sweep_cosine_approaches_density():
    grid = make_grid(1 << 16, COS.domain)
    rep = alpha_sweep(COS, None, grid, choose_tau(grid, 1.0), 0.5, [0.4, 0.2, 0.1, 0.05, 0.025])
    err = rep.metrics["abs_error"]
    assert err[-1] < err[0]
    assert rep.metrics["ball_mean"][-1] == pytest.approx(ARCSINE_05, rel=0.02)
    assert rep.passed


def test_alpha_below_resolution():
    grid = make_grid(256, Q1.domain)
    with pytest.raises(HarnessError, match="resolution"):
        alpha_sweep(Q1, None, grid, choose_tau(grid, 1.5), 0.0, [0.2, 1e-4])


# ---------------------------------------------------------------- decay

def test_decay_quadratic():
    grid = make_grid(1 << 16, Q1.domain)
    rep = decay_check(Q1, None, grid, 1.5, geometric_taus(choose_tau(grid, 1.5), 8))
    assert rep.fit["slope"] >= 0.8
    assert rep.passed


def test_decay_doublewell():
    f = catalog("doublewell1d")
    grid = make_grid(1 << 18, f.domain)
    rep = decay_check(f, None, grid, 10.0, geometric_taus(choose_tau(grid, 10.0), 8))
    assert rep.fit["slope"] >= 0.8


def test_decay_rejects_inside_point():
    with pytest.raises(HarnessError, match="inside"):
        decay_check(Q1, None, 1024, 0.5, [0.01, 0.005])


# ---------------------------------------------------------------- SPA agreement

@pytest.mark.parametrize("name,u", [("quadratic1d", 0.3), ("cosine1d", 0.5)])
def test_spa_agreement(name, u):
    f = catalog(name)
    grid = make_grid(1 << 16, f.domain)
    rep = spa_agreement(f, None, grid, u, geometric_taus(choose_tau(grid, 1.0), 8))
    assert rep.fit["slope"] >= 0.4


def test_spa_agreement_constant_function():
    zero = TestFunction(
        name="constant",
        d=1,
        eval=lambda x: 0.0,
        grad=lambda x: np.zeros(1),
        hess=lambda x: np.zeros((1, 1)),
        grad_bound=1.0,
        domain=BoxDomain((-1.0,), (1.0,)),
    )
    with pytest.raises(CriticalValueError):
        spa_agreement(zero, None, 1024, 0.0, [0.01, 0.005])


# ---------------------------------------------------------------- N rate

def test_n_rate_quadratic():
    rep = n_rate_1d(Q1, None, [2**k for k in range(10, 17)])
    assert rep.fit["slope"] <= -0.7
    assert rep.metrics["tau"][0] == pytest.approx(rep.summary["c_tau"] / 1024)


def test_n_rate_cosine_masked():
    rep = n_rate_1d(COS, None, [2**k for k in range(10, 17)])
    assert 0 < rep.summary["masked_fraction"] <= 0.05
    assert rep.fit["slope"] <= -0.7


def test_n_rate_accepts_non_doubling():
    rep = n_rate_1d(Q1, None, [1000, 3000, 7000])
    assert rep.axis == [1000.0, 3000.0, 7000.0]


def test_n_rate_guards():
    with pytest.raises(HarnessError):
        n_rate_1d(catalog("quadratic2d"), None, [64, 128])
    with pytest.raises(HarnessError, match="Nyquist"):
        n_rate_1d(Q1, None, [1024, 2048], c_tau=1e-3)


# ---------------------------------------------------------------- bench

def test_bench_smoke():
    rep = complexity_bench(M_list=(256, 512), omega_per_axis=64, n_list=(1024, 2048), head_to_head=64, repeats=1)
    assert rep.kind == "bench" and len(rep.metrics["wavefn_seconds"]) == 2
    assert set(rep.verdict) == {"wavefn_exponent_in_range", "charfn_linear_in_M", "charfn_slower_than_wavefn"}
    assert coefficient_of_variation([1.0, 1.0]) == 0.0
