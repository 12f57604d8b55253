"""Sweeps, error metrics, rate fits and timing benchmarks."""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import GradientSamples, charfn_density, finite_diff_gradients
from .field import BoxDomain, GridSpec, TestFunction, make_grid, sample_field
from .spa import CriticalValueError, analytic_density, find_stationary_points, oracle_density_grid, spa_transform
from .wavefn import (
    BallRegion,
    BinGrid,
    GradientDensity,
    choose_tau,
    integrate_ball,
    mean_in_ball,
    nyquist_range,
    power_spectrum_density,
    scaled_transform,
)

# pass thresholds on fitted log-log slopes
DECAY_MIN_SLOPE = 0.8
SPA_MIN_SLOPE = 0.4
N_RATE_MAX_SLOPE = -0.7
WAVEFN_EXPONENT = (0.9, 1.3)
CHARFN_M_EXPONENT = (0.75, 1.25)
ORACLE_QUAD_NODES = 8


class HarnessError(ValueError):
    pass


@dataclass
class SweepReport:
    kind: str
    axis: list[float]
    metrics: dict[str, list[float]]
    fit: dict[str, float] | None = None
    summary: dict = dc_field(default_factory=dict)
    verdict: dict[str, bool] = dc_field(default_factory=dict)
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.axis = [float(a) for a in self.axis]
        diffs = np.diff(self.axis)
        if len(self.axis) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise HarnessError(f"{self.kind} axis must be strictly monotone")
        for name, vals in self.metrics.items():
            if len(vals) != len(self.axis):
                raise HarnessError(f"metric {name!r} has {len(vals)} entries for {len(self.axis)} axis points")
        self.metrics = {k: [float(v) for v in vals] for k, vals in self.metrics.items()}

    @property
    def passed(self) -> bool:
        return all(self.verdict.values())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "axis": self.axis,
            "metrics": self.metrics,
            "fit": self.fit,
            "summary": self.summary,
            "verdict": self.verdict,
            "passed": self.passed,
            "params": self.params,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_jsonable)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def to_csv(self, path: str | Path) -> None:
        """Tidy layout: one row per axis point per metric."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "axis", "metric", "value"])
            for name, vals in self.metrics.items():
                for a, v in zip(self.axis, vals):
                    w.writerow([self.kind, repr(a), name, repr(v)])


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> dict[str, float]:
    """Least-squares line through (log x, log y); zero or negative y are rejected."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise HarnessError("log-log fit needs >= 2 points with positive coordinates")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def coefficient_of_variation(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.std() / abs(v.mean()))


def geometric_taus(tau_min: float, halvings: int) -> list[float]:
    """tau_min * 2^k for k = halvings..0 (decreasing)."""
    return [tau_min * 2.0**k for k in range(halvings, -1, -1)]


# ---------------------------------------------------------------- metrics

def same_bins(a: GradientDensity, b: GradientDensity) -> bool:
    return a.shape == b.shape and all(np.allclose(x, y, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(x))))) for x, y in zip(a.centers, b.centers))


def l1_error(a: GradientDensity, b: GradientDensity, mask: np.ndarray | None = None) -> float:
    """sum |a - b| * bin_volume over bins not excluded by `mask`.

    Without an explicit mask, the union of the densities' own masks is used.
    """
    if not same_bins(a, b):
        raise HarnessError("l1_error needs identical bin grids")
    if mask is None:
        mask = np.zeros(a.shape, dtype=bool)
        for m in (a.mask, b.mask):
            if m is not None:
                mask = mask | m
    mask = np.asarray(mask, dtype=bool).reshape(a.shape)
    return float(np.sum(np.abs(a.values - b.values)[~mask]) * a.bin_volume)


def masked_fraction(mask: np.ndarray) -> float:
    return float(np.mean(mask))


def window_mask(grid: BinGrid, lo, hi) -> np.ndarray:
    """True for bins whose centers fall outside the box [lo, hi]."""
    pts = grid.center_points()
    inside = np.all((pts >= np.atleast_1d(lo)) & (pts <= np.atleast_1d(hi)), axis=1)
    return ~inside.reshape(grid.shape)


def analysis_grid(f: TestFunction, bins: int = 64, span: float = 1.25) -> BinGrid:
    """Symmetric bins covering span * grad_bound on every axis."""
    return BinGrid.symmetric(span * f.grad_bound, bins, f.d)


def reference_density(f: TestFunction, domain: BoxDomain | None, grid: BinGrid) -> GradientDensity:
    """Bin-averaged analytic density with C-straddling bins masked."""
    return oracle_density_grid(f, domain, grid, quad_nodes=ORACLE_QUAD_NODES)


def oracle_ball_mass(f: TestFunction, domain: BoxDomain | None, region: BallRegion, nodes: int = 32) -> float:
    """Integral of the analytic density over the ball by Gauss-Legendre."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    pts = np.stack(np.meshgrid(*([t] * region.d), indexing="ij"), axis=-1).reshape(-1, region.d)
    wts = np.prod(np.stack(np.meshgrid(*([w] * region.d), indexing="ij"), axis=-1).reshape(-1, region.d), axis=1)
    c = np.asarray(region.center)
    total = sum(wk * analytic_density(f, domain, c + region.radius * p) for p, wk in zip(pts, wts))
    return float(total * region.radius**region.d)


def _check_nyquist(grid: GridSpec, tau: float, need: np.ndarray) -> None:
    rng = nyquist_range(grid, tau)
    if np.any(rng < need):
        raise HarnessError(
            f"tau={tau:.4g} violates the Nyquist precondition: range {rng.tolist()} < required {np.asarray(need).tolist()}"
        )


def _resolve(f: TestFunction, domain: BoxDomain | None, grid) -> tuple[BoxDomain, GridSpec]:
    domain = f.domain if domain is None else domain
    if not isinstance(grid, GridSpec):
        grid = make_grid(grid, domain)
    return domain, grid


# ---------------------------------------------------------------- sweeps

def tau_sweep(
    f: TestFunction,
    domain: BoxDomain | None,
    grid: GridSpec | int,
    taus: Sequence[float],
    region: BallRegion,
    bins: BinGrid | None = None,
) -> SweepReport:
    """Ball mass, pointwise value and L1 error against the oracle for each tau."""
    if len(taus) == 0:
        raise HarnessError("tau_sweep needs at least one tau")
    domain, grid = _resolve(f, domain, grid)
    need = np.maximum(f.grad_bound, np.abs(region.center) + region.radius)
    for t in taus:
        _check_nyquist(grid, t, need)
    bins = analysis_grid(f) if bins is None else bins
    field = sample_field(f, domain, grid)
    ref = reference_density(f, domain, bins)
    ref_mass = oracle_ball_mass(f, domain, region)

    mass, point, l1, mean = [], [], [], []
    for t in taus:
        dens = power_spectrum_density(field, t)
        m = integrate_ball(dens, region)
        mass.append(m)
        mean.append(m / region.volume)
        point.append(dens.value_at(region.center))
        l1.append(l1_error(dens.rebin(bins), ref, ref.mask))
    err = [abs(m - ref_mass) for m in mass]
    fit = fit_loglog(taus, err) if all(e > 0 for e in err) and len(taus) > 1 else None
    steps = [b <= 1.1 * a for a, b in zip(l1, l1[1:])]
    return SweepReport(
        kind="tau_sweep",
        axis=list(taus),
        metrics={"ball_mass": mass, "ball_mean": mean, "pointwise": point, "l1": l1, "ball_mass_error": err},
        fit=fit,
        summary={
            "oracle_ball_mass": ref_mass,
            "oracle_density": _density_or_none(f, domain, region.center),
            "pointwise_cv": coefficient_of_variation(point),
            "ball_cv": coefficient_of_variation(mass),
            "l1_monotone_within_10pct": all(steps),
            "masked_fraction": masked_fraction(ref.mask),
            "final_ball_mass_error": err[-1],
        },
        params={"function": f.name, "n": list(grid.n), "center": list(region.center), "alpha": region.radius},
    )


def _density_or_none(f, domain, u) -> float | None:
    try:
        return analytic_density(f, domain, u)
    except CriticalValueError:
        return None


def alpha_sweep(
    f: TestFunction,
    domain: BoxDomain | None,
    grid: GridSpec | int,
    tau_small: float,
    u0,
    alphas: Sequence[float],
) -> SweepReport:
    """Ball means at one small tau for shrinking radii."""
    if len(alphas) == 0:
        raise HarnessError("alpha_sweep needs at least one alpha")
    domain, grid = _resolve(f, domain, grid)
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    _check_nyquist(grid, tau_small, np.maximum(f.grad_bound, np.abs(u0) + max(alphas)))
    field = sample_field(f, domain, grid)
    dens = power_spectrum_density(field, tau_small)
    if min(alphas) < 2 * float(np.max(dens.widths)):
        raise HarnessError(f"alpha={min(alphas)} is below the bin resolution (need >= 2 bins = {2 * float(np.max(dens.widths)):.3g})")
    target = analytic_density(f, domain, u0)
    means = [mean_in_ball(dens, BallRegion(tuple(u0), a)) for a in alphas]
    err = [abs(m - target) for m in means]
    return SweepReport(
        kind="alpha_sweep",
        axis=list(alphas),
        metrics={"ball_mean": means, "abs_error": err},
        summary={"oracle_density": target, "tau": tau_small},
        verdict={"final_within_2pct": err[-1] <= 0.02 * target},
        params={"function": f.name, "n": list(grid.n), "u0": u0.tolist()},
    )


def decay_check(
    f: TestFunction,
    domain: BoxDomain | None,
    grid: GridSpec | int,
    u0_outside,
    taus: Sequence[float],
) -> SweepReport:
    """Pointwise power at a gradient value nothing maps to; should fall like tau."""
    domain, grid = _resolve(f, domain, grid)
    u0 = np.atleast_1d(np.asarray(u0_outside, dtype=float))
    pts = find_stationary_points(f, domain, u0)
    if pts.count:
        raise HarnessError(
            f"u0={u0.tolist()} lies inside grad S(Omega) (density {analytic_density(f, domain, u0):.4g}); decay check needs an empty preimage"
        )
    if len(taus) < 2:
        raise HarnessError("decay_check needs at least two taus")
    need = np.maximum(f.grad_bound, np.abs(u0))
    for t in taus:
        _check_nyquist(grid, t, need)
    field = sample_field(f, domain, grid)
    point = [power_spectrum_density(field, t).value_at(u0) for t in taus]
    fit = fit_loglog(taus, point)
    return SweepReport(
        kind="decay",
        axis=list(taus),
        metrics={"pointwise": point},
        fit=fit,
        verdict={"slope_ge_0.8": fit["slope"] >= DECAY_MIN_SLOPE},
        params={"function": f.name, "n": list(grid.n), "u0": u0.tolist()},
    )


def spa_agreement(
    f: TestFunction,
    domain: BoxDomain | None,
    grid: GridSpec | int,
    u,
    taus: Sequence[float],
) -> SweepReport:
    """|F_fft - F_spa| at the FFT bin nearest u, per tau."""
    domain, grid = _resolve(f, domain, grid)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    pts = find_stationary_points(f, domain, u)  # raises inside C
    if pts.count == 0:
        raise HarnessError(f"u={u.tolist()} has no stationary points; the SPA main term is absent")
    if len(taus) < 2:
        raise HarnessError("spa_agreement needs at least two taus")
    for t in taus:
        _check_nyquist(grid, t, np.maximum(f.grad_bound, np.abs(u)))
    field = sample_field(f, domain, grid)
    errs, used = [], []
    for t in taus:
        centers, F = scaled_transform(field, t)
        idx = tuple(int(np.argmin(np.abs(c - x))) for c, x in zip(centers, u))
        ub = np.array([c[i] for c, i in zip(centers, idx)])
        errs.append(abs(complex(F[idx]) - spa_transform(f, domain, ub, t)))
        used.append(ub.tolist())
    fit = fit_loglog(taus, errs)
    return SweepReport(
        kind="spa",
        axis=list(taus),
        metrics={"abs_error": errs},
        fit=fit,
        summary={"bin_u": used},
        verdict={"slope_ge_0.4": fit["slope"] >= SPA_MIN_SLOPE},
        params={"function": f.name, "n": list(grid.n), "u": u.tolist()},
    )


def n_rate_1d(
    f: TestFunction,
    domain: BoxDomain | None,
    n_list: Sequence[int],
    c_tau: float | None = None,
    region: BallRegion | None = None,
    bins: BinGrid | None = None,
) -> SweepReport:
    """L1 error against the bin-averaged oracle with tau = c_tau / N.

    ``c_tau`` defaults to the value that gives a 3x Nyquist margin; when
    ``region`` is given the error is restricted to bins inside it.
    """
    domain = f.domain if domain is None else domain
    if f.d != 1:
        raise HarnessError("n_rate_1d is one-dimensional")
    if len(n_list) < 2:
        raise HarnessError("n_rate_1d needs at least two sizes")
    L = float(domain.widths[0])
    if c_tau is None:
        c_tau = 3.0 * f.grad_bound * L / math.pi
    bins = analysis_grid(f) if bins is None else bins
    ref = reference_density(f, domain, bins)
    mask = ref.mask.copy()
    if region is not None:
        mask |= window_mask(bins, region.lo, region.hi)
    errs, taus = [], []
    for n in n_list:
        grid = make_grid(int(n), domain)
        tau = c_tau / n
        _check_nyquist(grid, tau, np.array([f.grad_bound]))
        dens = power_spectrum_density(sample_field(f, domain, grid), tau)
        errs.append(l1_error(dens.rebin(bins), ref, mask))
        taus.append(tau)
    fit = fit_loglog(n_list, errs)
    return SweepReport(
        kind="n_sweep",
        axis=[float(n) for n in n_list],
        metrics={"l1": errs, "tau": taus},
        fit=fit,
        summary={"masked_fraction": masked_fraction(mask), "c_tau": c_tau},
        verdict={"slope_le_-0.7": fit["slope"] <= N_RATE_MAX_SLOPE},
        params={"function": f.name},
    )


# ---------------------------------------------------------------- timing

def _median_time(fn, repeats: int = 5) -> float:
    fn()  # warm-up
    runs = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs)


def complexity_bench(
    M_list: Sequence[int] = (1024, 2048, 4096, 8192),
    omega_per_axis: int = 1024,
    n_list: Sequence[int] = tuple(2**k for k in range(14, 21)),
    head_to_head: int = 4096,
    repeats: int = 5,
    seed: int = 0,
) -> SweepReport:
    """Median-of-`repeats` wall times for the FFT estimator over field sizes
    and for the direct-sum characteristic-function estimator over sample
    counts at a fixed frequency lattice."""
    from .field import catalog

    f = catalog("quadratic1d")
    wf_times = []
    for n in n_list:
        field = sample_field(f, None, int(n))
        tau = choose_tau(field, f.grad_bound)
        wf_times.append(_median_time(lambda: power_spectrum_density(field, tau), repeats))
    wf_fit = fit_loglog(n_list, wf_times)

    rng = np.random.Generator(np.random.Philox(key=seed))
    grid = BinGrid.symmetric(1.25, omega_per_axis)
    cf_times = []
    for M in M_list:
        g = GradientSamples(rng.uniform(-1, 1, size=(int(M), 1)))
        cf_times.append(_median_time(lambda: charfn_density(g, 2.0, omega_per_axis, grid), repeats))
    cf_fit = fit_loglog(M_list, cf_times)
    per_elem = [t / (M * omega_per_axis) for t, M in zip(cf_times, M_list)]

    # head to head: charfn at N = M = lattice = head_to_head vs FFT estimator at the largest n
    g = finite_diff_gradients(sample_field(f, None, head_to_head + 2))  # exactly head_to_head interior samples
    h2h_grid = BinGrid.symmetric(1.25, head_to_head)
    cf_big = _median_time(lambda: charfn_density(g, 2.0, head_to_head, h2h_grid), max(1, repeats // 2))
    wf_big = wf_times[-1]

    # the two series have different axes; report each under its own metric
    report = SweepReport(
        kind="bench",
        axis=[float(n) for n in n_list],
        metrics={"wavefn_seconds": wf_times},
        fit=wf_fit,
        summary={
            "charfn_M": [int(m) for m in M_list],
            "charfn_seconds": cf_times,
            "charfn_fit": cf_fit,
            "charfn_seconds_per_sample_frequency": per_elem,
            "charfn_cost_spread": max(per_elem) / min(per_elem),
            "omega_per_axis": omega_per_axis,
            "head_to_head": {"charfn_N": head_to_head, "charfn_seconds": cf_big, "wavefn_N": int(n_list[-1]), "wavefn_seconds": wf_big},
        },
        verdict={
            "wavefn_exponent_in_range": WAVEFN_EXPONENT[0] <= wf_fit["slope"] <= WAVEFN_EXPONENT[1],
            "charfn_linear_in_M": CHARFN_M_EXPONENT[0] <= cf_fit["slope"] <= CHARFN_M_EXPONENT[1],
            "charfn_slower_than_wavefn": cf_big > wf_big,
        },
        params={"repeats": repeats},
    )
    return report
