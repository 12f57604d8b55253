"""Stationary points of S(x) - u.x and the closed-form quantities built on them:
the gradient density, the stationary-phase value of F_tau and the cross
terms between pairs of stationary points."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .field import BoxDomain, TestFunction
from .wavefn import BinGrid, GradientDensity, check_tau

RESIDUAL_TOL = 1e-10
MAX_NEWTON_ITER = 50
DEDUPE_REL = 1e-6
BOUNDARY_REL = 1e-3
CRITICAL_DET = 1e-8
# Newton only pins a root at a fold to about sqrt(residual), so |det H| there
# cannot be driven below ~sqrt(RESIDUAL_TOL); anything under this is a fold
FOLD_DET = 10.0 * math.sqrt(RESIDUAL_TOL)


class CriticalValueError(ValueError):
    """u lies in the critical set: some preimage has a (near) singular Hessian,
    so the gradient density is undefined there."""


def hessian_signature(H, scale: float | None = None) -> int:
    """Number of positive minus number of negative eigenvalues of symmetric H."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[0] != H.shape[1]:
        raise ValueError(f"Hessian must be square, got {H.shape}")
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    if scale is None:
        scale = max(1.0, float(np.max(np.abs(eig)))) ** H.shape[0]
    if abs(float(np.prod(eig))) <= 1e-12 * scale:
        raise ValueError("Hessian is (near) singular; signature undefined")
    return int(np.sum(eig > 0) - np.sum(eig < 0))


@dataclass(frozen=True)
class StationaryPoint:
    x: tuple[float, ...]
    det_hess: float
    signature: int
    phase_offset: float  # S(x) - u.x


@dataclass(frozen=True)
class StationaryPointSet:
    u: tuple[float, ...]
    points: tuple[StationaryPoint, ...]

    @property
    def count(self) -> int:
        return len(self.points)

    def to_json(self) -> str:
        return json.dumps(
            {"u": list(self.u), "count": self.count, "points": [asdict(p) | {"x": list(p.x)} for p in self.points]},
            indent=2,
        )


def _seed_lattice(domain: BoxDomain, per_axis: int) -> np.ndarray:
    axes = [lo + (np.arange(per_axis) + 0.5) * w / per_axis for lo, w in zip(domain.lo, domain.widths)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def find_stationary_points(
    f: TestFunction, domain: BoxDomain | None, u, seeds_per_axis: int = 32
) -> StationaryPointSet:
    """Solve grad S(x) = u by multi-start Newton from a seed lattice.

    Roots within 1e-3 of the box width of the boundary are dropped, except
    for periodic functions on their natural domain, where roots are wrapped
    into the period instead. Raises CriticalValueError if any root has
    |det H| < 1e-8, or below the fold threshold FOLD_DET (Newton converges
    only linearly onto a degenerate root, so a smaller determinant is not
    reachable there).
    """
    domain = f.domain if domain is None else domain
    d = f.d
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != d or domain.d != d:
        raise ValueError("dimension mismatch between function, domain and u")
    tol = RESIDUAL_TOL * max(1.0, float(np.max(np.abs(u))))

    x = _seed_lattice(domain, seeds_per_axis)
    alive = np.ones(len(x), dtype=bool)
    converged = np.zeros(len(x), dtype=bool)
    for _ in range(MAX_NEWTON_ITER):
        idx = np.flatnonzero(alive & ~converged)
        if idx.size == 0:
            break
        g = f.grad_many(x[idx]) - u
        done = np.max(np.abs(g), axis=1) <= tol
        converged[idx[done]] = True
        idx, g = idx[~done], g[~done]
        if idx.size == 0:
            break
        H = f.hess_many(x[idx])
        det = np.linalg.det(H)
        singular = ~np.isfinite(det) | (np.abs(det) < 1e-14)
        alive[idx[singular]] = False  # singular Jacobian: skip this seed
        idx, g, H = idx[~singular], g[~singular], H[~singular]
        if idx.size == 0:
            continue
        step = np.linalg.solve(H, g[..., None])[..., 0]
        x[idx] = x[idx] - step
        bad = ~np.all(np.isfinite(x[idx]), axis=1)
        alive[idx[bad]] = False
    # last residual check for iterates that converged on the final step
    idx = np.flatnonzero(alive & ~converged)
    if idx.size:
        g = f.grad_many(x[idx]) - u
        converged[idx[np.max(np.abs(g), axis=1) <= tol]] = True

    widths = domain.widths
    lo = np.asarray(domain.lo)
    roots = x[converged]
    periodic = f.periodic and domain == f.domain
    if periodic:
        # whole periods: the domain is a torus and has no boundary
        roots = lo + np.mod(roots - lo, widths)
    else:
        margin = BOUNDARY_REL * widths
        inside = np.all((roots > lo + margin) & (roots < np.asarray(domain.hi) - margin), axis=1)
        roots = roots[inside]

    unique: list[np.ndarray] = []
    dedupe = DEDUPE_REL * widths
    for r in roots[np.lexsort(roots.T[::-1])] if len(roots) else []:
        gap = np.abs(r - np.asarray(unique)) if unique else np.empty((0, d))
        if periodic and len(gap):
            gap = np.minimum(gap, widths - gap)
        if not np.any(np.all(gap <= dedupe, axis=1)):
            unique.append(r)

    points = []
    for r in unique:
        for _ in range(2):  # polish below the acceptance tolerance
            H = np.asarray(f.hess(r), dtype=float).reshape(d, d)
            try:
                r = r - np.linalg.solve(H, np.asarray(f.grad(r), float) - u)
            except np.linalg.LinAlgError:
                break
        H = np.asarray(f.hess(r), dtype=float).reshape(d, d)
        det = float(np.linalg.det(H))
        scale = max(1.0, float(np.max(np.abs(H)))) ** (d - 1)
        if abs(det) < CRITICAL_DET or abs(det) < FOLD_DET * scale:
            raise CriticalValueError(f"u={u.tolist()} is a critical value (|det H|={abs(det):.3g} at x={r.tolist()}); density undefined here")
        points.append(
            StationaryPoint(
                x=tuple(float(v) for v in r),
                det_hess=det,
                signature=hessian_signature(H),
                phase_offset=float(f.eval(r) - u @ r),
            )
        )
    return StationaryPointSet(tuple(float(v) for v in u), tuple(points))


def analytic_density(f: TestFunction, domain: BoxDomain | None, u, seeds_per_axis: int = 32) -> float:
    """(1/mu(Omega)) * sum over stationary points of 1/|det H|."""
    domain = f.domain if domain is None else domain
    pts = find_stationary_points(f, domain, u, seeds_per_axis)
    return sum(1.0 / abs(p.det_hess) for p in pts.points) / domain.measure()


def oracle_density_grid(
    f: TestFunction, domain: BoxDomain | None, grid: BinGrid, seeds_per_axis: int = 32, quad_nodes: int = 1
) -> GradientDensity:
    """Analytic density on a bin grid; bins touching the critical set are
    masked (value 0).

    With ``quad_nodes == 1`` each bin holds the density at its center. Larger
    values average the density over the bin with a tensor Gauss-Legendre
    rule, which is the right reference for binned estimators where the
    density is strongly curved; a bin whose nodes disagree on the number of
    stationary points is masked as well.
    """
    domain = f.domain if domain is None else domain
    centers = grid.center_points()
    if quad_nodes == 1:
        offsets, weights = np.zeros((1, grid.d)), np.ones(1)
    else:
        t, w = np.polynomial.legendre.leggauss(quad_nodes)
        mesh = np.meshgrid(*([t] * grid.d), indexing="ij")
        offsets = np.stack([m.ravel() for m in mesh], axis=-1) * (grid.widths / 2)
        weights = np.prod(np.stack(np.meshgrid(*([w / 2] * grid.d), indexing="ij")).reshape(grid.d, -1), axis=0)
    values = np.zeros(len(centers))
    mask = np.zeros(len(centers), dtype=bool)
    mu = domain.measure()
    for i, u in enumerate(centers):
        try:
            sets = [find_stationary_points(f, domain, u + ok, seeds_per_axis) for ok in offsets]
        except CriticalValueError:
            mask[i] = True
            continue
        if len({s.count for s in sets}) > 1:
            # the stationary-point count changes inside the bin: it straddles C
            mask[i] = True
            continue
        values[i] = sum(wk * sum(1.0 / abs(p.det_hess) for p in s.points) for s, wk in zip(sets, weights)) / mu
    return GradientDensity.on_grid(grid, values.reshape(grid.shape), mask=mask.reshape(grid.shape))


def _phasors(pts: StationaryPointSet, tau: float) -> np.ndarray:
    return np.array(
        [
            np.exp(1j * (p.phase_offset / tau + p.signature * math.pi / 4)) / math.sqrt(abs(p.det_hess))
            for p in pts.points
        ],
        dtype=complex,
    )


def spa_transform(f: TestFunction, domain: BoxDomain | None, u, tau: float) -> complex:
    """Stationary-phase main term of F_tau(u); 0 when u has no preimage."""
    tau = check_tau(tau)
    domain = f.domain if domain is None else domain
    pts = find_stationary_points(f, domain, u)
    if pts.count == 0:
        return 0j
    return complex(_phasors(pts, tau).sum() / math.sqrt(domain.measure()))


def cross_term(f: TestFunction, domain: BoxDomain | None, u, tau: float, k: int, l: int) -> complex:
    """Interference term between stationary points k and l in |F_tau(u)|^2."""
    tau = check_tau(tau)
    domain = f.domain if domain is None else domain
    if k == l:
        raise ValueError("cross term needs two distinct stationary points")
    pts = find_stationary_points(f, domain, u)
    if not (0 <= k < pts.count and 0 <= l < pts.count):
        raise IndexError(f"stationary point index out of range (N(u)={pts.count})")
    z = _phasors(pts, tau)
    return complex(z[k] * np.conj(z[l]) / domain.measure())


def spa_power_terms(f: TestFunction, domain: BoxDomain | None, u, tau: float) -> tuple[float, float]:
    """Split |spa_transform|^2 into the density term and the summed cross terms."""
    tau = check_tau(tau)
    domain = f.domain if domain is None else domain
    pts = find_stationary_points(f, domain, u)
    z = _phasors(pts, tau) / math.sqrt(domain.measure())
    diag = float(np.sum(np.abs(z) ** 2))
    total = float(np.abs(z.sum()) ** 2)
    return diag, total - diag
