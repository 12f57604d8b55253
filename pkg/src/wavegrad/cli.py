"""wavegrad command line.

Usage:
    wavegrad estimate --fn quadratic1d --n 4096 --tau auto --out run/
    wavegrad oracle   --fn cosine1d --u0 0.5 --out run/
    wavegrad compare  --fn quadratic1d --out run/
    wavegrad sweep    --kind decay --fn quadratic1d --u0 1.5 --out run/
    wavegrad bench    --out run/
    wavegrad hog      --image ramp.pgm --orient-bins 8 --out run/

Every run writes verdict.json; the exit code is 0 iff all gates pass.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import harness
from .baselines import charfn_density, finite_diff_gradients, histogram_density, monte_carlo_density
from .field import CATALOG_NAMES, FieldError, catalog, load_field_csv, load_image_pgm, make_grid, sample_field
from .hog import auto_tau, fd_gradient_bound, image_gradient_density, orientation_histogram
from .spa import CriticalValueError, analytic_density, find_stationary_points, oracle_density_grid
from .wavefn import BallRegion, BinGrid, EstimatorError, choose_tau, nyquist_range, power_spectrum_density

CONCORDANCE_L1 = 0.08


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- output

def _atomic_write(path: Path, writer) -> None:
    """Write through a temp file in the same directory, then rename."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_json(path: Path, obj) -> None:
    text = json.dumps(obj, indent=2, default=harness._jsonable) + "\n"
    _atomic_write(path, lambda p: Path(p).write_text(text))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _finish(out: Path, command: str, gates: dict[str, bool], extra: dict | None = None) -> int:
    verdict = {"command": command, "gates": gates, "passed": all(gates.values())}
    if extra:
        verdict.update(extra)
    _write_json(out / "verdict.json", verdict)
    for name, ok in gates.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if verdict["passed"] else 1


# ---------------------------------------------------------------- inputs

def _vector(text: str | None) -> np.ndarray | None:
    if text is None:
        return None
    return np.array([float(t) for t in text.split(",")])


def _source(args):
    """Return (field, test_function_or_None, grad_bound)."""
    chosen = [s for s in (args.fn, args.field, args.image) if s]
    if len(chosen) != 1:
        raise UsageError("give exactly one of --fn, --field, --image")
    if args.fn:
        f = catalog(args.fn)
        return sample_field(f, None, args.n), f, f.grad_bound
    if args.field:
        field = load_field_csv(args.field)
    else:
        field = load_image_pgm(args.image, args.scale)
    return field, None, fd_gradient_bound(field)


def _tau(args, field, grad_bound: float) -> float:
    if args.tau in (None, "auto"):
        if args.image or grad_bound <= 0:
            return auto_tau(field, args.margin)
        return choose_tau(field, grad_bound, args.margin)
    return float(args.tau)


def _catalog_only(args, command: str):
    if args.image:
        raise UsageError(f"{command} needs analytic gradients; image inputs go through the `hog` subcommand")
    if args.field or not args.fn:
        raise UsageError(f"{command} needs a catalog function (--fn)")
    return catalog(args.fn)


# ---------------------------------------------------------------- commands

def cmd_estimate(args) -> int:
    out = _out_dir(args)
    field, f, bound = _source(args)
    tau = _tau(args, field, bound)
    rng = nyquist_range(field.grid, tau)
    if bound > 0 and np.any(rng < bound):
        raise UsageError(
            f"tau={tau:g} gives Nyquist range {rng.tolist()}, below the gradient bound {bound:g}: gradients would alias. "
            "Increase tau, refine the grid, or use --tau auto."
        )
    dens = power_spectrum_density(field, tau, taper=args.taper)
    prenorm = dens.prenorm_mass
    if args.bins:
        half = args.span * bound if bound > 0 else float(np.max(rng))
        dens = dens.rebin(BinGrid.symmetric(half, args.bins, field.d))
    _atomic_write(out / "density.csv", dens.to_csv)
    meta = {
        "source": args.fn or args.field or args.image,
        "n": list(field.grid.n),
        "tau": tau,
        "nyquist_range": rng.tolist(),
        "grad_bound": bound,
        "prenorm_mass": prenorm,
        "prenorm_deviation": abs(prenorm - 1.0),
        "bins": list(dens.shape),
        "taper": bool(args.taper),
    }
    _write_json(out / "metadata.json", meta)
    return _finish(out, "estimate", {"nyquist_covers_gradient_bound": bool(np.all(rng >= bound))})


def cmd_oracle(args) -> int:
    out = _out_dir(args)
    f = _catalog_only(args, "oracle")
    gates = {}
    if args.u0 is not None:
        u0 = _vector(args.u0)
        try:
            pts = find_stationary_points(f, None, u0)
            report = json.loads(pts.to_json())
            report["density"] = analytic_density(f, None, u0)
            gates["density_defined"] = True
        except CriticalValueError as exc:
            report = {"u": u0.tolist(), "error": str(exc)}
            gates["density_defined"] = False
        _write_json(out / "stationary_points.json", report)
    if args.bins:
        grid = harness.analysis_grid(f, args.bins, args.span)
        dens = oracle_density_grid(f, None, grid)
        _atomic_write(out / "oracle.csv", dens.to_csv)
        _write_json(out / "oracle_mask.json", {"masked_fraction": harness.masked_fraction(dens.mask), "mask": dens.mask.tolist()})
    if args.u0 is None and not args.bins:
        raise UsageError("oracle needs --u0 and/or --bins")
    return _finish(out, "oracle", gates)


def cmd_compare(args) -> int:
    out = _out_dir(args)
    f = _catalog_only(args, "compare")
    field = sample_field(f, None, args.n)
    bins = args.bins or 64
    grid = harness.analysis_grid(f, bins, args.span)
    oracle = harness.reference_density(f, None, grid)
    mask = oracle.mask
    tau = _tau(args, field, f.grad_bound)
    fd = finite_diff_gradients(field)
    ests = {
        "wavefn": power_spectrum_density(field, tau, taper=args.taper).rebin(grid),
        "charfn": charfn_density(fd, f.domain.measure(), bins, grid),
        "histogram": histogram_density(fd, grid),
        "montecarlo": monte_carlo_density(f, None, args.mc_samples, grid, args.seed),
        "oracle": oracle,
    }
    names = list(ests)
    matrix = {a: {b: harness.l1_error(ests[a], ests[b], mask) for b in names} for a in names}
    worst = max(matrix[a][b] for a in names for b in names)
    report = {
        "function": f.name,
        "n": args.n,
        "tau": tau,
        "bins": bins,
        "mc_samples": args.mc_samples,
        "seed": args.seed,
        "l1": matrix,
        "max_pairwise_l1": worst,
        "masked_fraction": harness.masked_fraction(mask),
        "charfn_clipped_mass": ests["charfn"].meta["clipped_mass"],
    }
    _write_json(out / "comparison.json", report)
    for name, dens in ests.items():
        _atomic_write(out / f"{name}.csv", dens.to_csv)
    return _finish(out, "compare", {f"pairwise_l1_le_{CONCORDANCE_L1}": worst <= CONCORDANCE_L1})


def _sweep_taus(args, grid, need: float) -> list[float]:
    tau_min = float(args.tau) if args.tau not in (None, "auto") else choose_tau(grid, need, args.margin)
    return harness.geometric_taus(tau_min, args.halvings)


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    f = _catalog_only(args, "sweep")
    n = args.n
    grid = make_grid(n, f.domain)
    u0 = _vector(args.u0)
    kind = args.kind
    if kind == "tau":
        u0 = np.zeros(f.d) + 0.3 if u0 is None else u0
        region = BallRegion(tuple(u0), args.alpha)
        need = max(f.grad_bound, float(np.max(np.abs(u0))) + args.alpha)
        report = harness.tau_sweep(f, None, grid, _sweep_taus(args, grid, need), region)
        report.verdict["ball_cv_lt_0.05"] = report.summary["ball_cv"] < 0.05
    elif kind == "alpha":
        u0 = np.zeros(f.d) if u0 is None else u0
        tau = float(args.tau) if args.tau not in (None, "auto") else choose_tau(grid, f.grad_bound + 0.4, args.margin)
        report = harness.alpha_sweep(f, None, grid, tau, u0, args.alphas)
    elif kind == "n":
        n_list = args.n_list or [2**k for k in range(10, 17)]
        report = harness.n_rate_1d(f, None, n_list)
    elif kind == "decay":
        if u0 is None:
            raise UsageError("decay sweep needs --u0 outside the gradient range")
        need = max(f.grad_bound, float(np.max(np.abs(u0))))
        report = harness.decay_check(f, None, grid, u0, _sweep_taus(args, grid, need))
    elif kind == "spa":
        u0 = np.zeros(f.d) + 0.3 if u0 is None else u0
        need = max(f.grad_bound, float(np.max(np.abs(u0))))
        report = harness.spa_agreement(f, None, grid, u0, _sweep_taus(args, grid, need))
    else:
        raise UsageError(f"invalid sweep kind {kind!r}")
    report.to_json(out / f"sweep_{kind}.json")
    report.to_csv(out / f"sweep_{kind}.csv")
    if report.fit:
        print(f"fitted slope {report.fit['slope']:.3f} (r2 {report.fit['r2']:.3f})")
    return _finish(out, f"sweep:{kind}", report.verdict)


def cmd_bench(args) -> int:
    out = _out_dir(args)
    report = harness.complexity_bench(repeats=args.repeats, seed=args.seed)
    report.to_json(out / "bench.json")
    report.to_csv(out / "bench.csv")
    print(f"wavefn exponent {report.fit['slope']:.3f}; charfn exponent in M {report.summary['charfn_fit']['slope']:.3f}")
    return _finish(out, "bench", report.verdict)


def cmd_hog(args) -> int:
    out = _out_dir(args)
    if not args.image:
        raise UsageError("hog needs --image <file.pgm>")
    field = load_image_pgm(args.image, args.scale)
    tau = auto_tau(field, args.margin) if args.tau in (None, "auto") else float(args.tau)
    dens = image_gradient_density(field, tau, taper=args.taper)
    _atomic_write(out / "hog_density.csv", dens.to_csv)
    result = {"image": args.image, "tau": tau, "argmax_u": dens.argmax_center().tolist(), "prenorm_mass": dens.prenorm_mass}
    if args.orient_bins:
        hist, zero = orientation_histogram(dens, args.orient_bins)
        result.update(orientation_mass=hist.tolist(), zero_gradient_mass=zero, peak_sector=int(np.argmax(hist)))
    _write_json(out / "orientation.json", result)
    return _finish(out, "hog", {"normalized": abs(dens.total_mass() - 1.0) <= 1e-6})


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("input")
    src.add_argument("--fn", choices=CATALOG_NAMES, help="catalog test function")
    src.add_argument("--field", help="field CSV file")
    src.add_argument("--image", help="grayscale PGM image")
    common.add_argument("--n", type=int, default=None, help="samples per axis")
    common.add_argument("--tau", default="auto", help="tau value or 'auto'")
    common.add_argument("--margin", type=float, default=1.5, help="Nyquist margin for --tau auto")
    common.add_argument("--bins", type=int, default=None, help="analysis bins per axis")
    common.add_argument("--span", type=float, default=1.25, help="analysis range as a multiple of the gradient bound")
    common.add_argument("--u0", default=None, help="gradient value, comma separated")
    common.add_argument("--alpha", type=float, default=0.05, help="ball radius")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--taper", action="store_true", help="cosine taper on the outer 5%% of each axis")
    common.add_argument("--scale", type=float, default=1.0 / 255, help="image intensity scale")

    p = argparse.ArgumentParser(prog="wavegrad", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("estimate", parents=[common], help="power-spectrum density of a field")
    sp.set_defaults(func=cmd_estimate, default_n=4096)

    sp = sub.add_parser("oracle", parents=[common], help="stationary points and analytic density")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("compare", parents=[common], help="all estimators against each other")
    sp.add_argument("--mc-samples", type=int, default=10_000_000)
    sp.set_defaults(func=cmd_compare, default_n=4096)

    sp = sub.add_parser("sweep", parents=[common], help="tau / alpha / N sweeps with fitted rates")
    sp.add_argument("--kind", required=True, choices=["tau", "alpha", "n", "decay", "spa"])
    sp.add_argument("--halvings", type=int, default=8)
    sp.add_argument("--alphas", type=lambda s: [float(t) for t in s.split(",")], default=[0.4, 0.2, 0.1, 0.05])
    sp.add_argument("--n-list", type=lambda s: [int(t) for t in s.split(",")], default=None)
    sp.set_defaults(func=cmd_sweep, default_n=65536)

    sp = sub.add_parser("bench", parents=[common], help="timing of FFT vs characteristic-function estimators")
    sp.add_argument("--repeats", type=int, default=5)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("hog", parents=[common], help="gradient density and orientation histogram of an image")
    sp.add_argument("--orient-bins", type=int, default=8)
    sp.set_defaults(func=cmd_hog)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.n is None:
        args.n = getattr(args, "default_n", None)
    try:
        return args.func(args)
    except (UsageError, FieldError, EstimatorError, CriticalValueError, harness.HarnessError) as exc:
        print(f"wavegrad {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
