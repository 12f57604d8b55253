"""Reference estimators of the gradient density: finite-difference
histograms, a Monte-Carlo oracle and the characteristic-function method."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field import BoxDomain, ScalarField, TestFunction
from .wavefn import BinGrid, GradientDensity, EstimatorError

MC_CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class GradientSamples:
    """M gradient vectors, shape (M, d)."""

    samples: np.ndarray
    source: str = "analytic"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1:
            raise EstimatorError("need at least one gradient sample")
        if not np.all(np.isfinite(s)):
            raise EstimatorError("gradient samples must be finite")
        if self.source not in ("analytic", "finite-difference"):
            raise EstimatorError(f"unknown sample source {self.source!r}")
        object.__setattr__(self, "samples", s)

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def M(self) -> int:
        return self.samples.shape[0]

    def save(self, path: str | Path) -> None:
        """Little-endian float64 payload at `path`, JSON header at `path`.json."""
        path = Path(path)
        path.write_bytes(self.samples.astype("<f8").tobytes())
        Path(str(path) + ".json").write_text(
            json.dumps({"d": self.d, "M": self.M, "dtype": "<f8", "order": "row-major", "source": self.source})
        )

    @classmethod
    def load(cls, path: str | Path) -> "GradientSamples":
        path = Path(path)
        hdr = json.loads(Path(str(path) + ".json").read_text())
        raw = np.frombuffer(path.read_bytes(), dtype="<f8")
        if raw.size != hdr["M"] * hdr["d"]:
            raise EstimatorError(f"sample file holds {raw.size} reals, header implies {hdr['M'] * hdr['d']}")
        return cls(raw.reshape(hdr["M"], hdr["d"]).astype(float), hdr.get("source", "analytic"))


def finite_diff_gradients(field: ScalarField) -> GradientSamples:
    """Central differences at grid points not adjacent to the boundary."""
    v = field.values
    if any(n < 3 for n in field.grid.n):
        raise EstimatorError(f"grid too small for central differences: {field.grid.n}")
    dx = field.grid.spacing()
    inner = tuple(slice(1, -1) for _ in range(field.d))
    comps = []
    for axis, h in enumerate(dx):
        fwd = [slice(1, -1)] * field.d
        bwd = [slice(1, -1)] * field.d
        fwd[axis] = slice(2, None)
        bwd[axis] = slice(None, -2)
        comps.append(((v[tuple(fwd)] - v[tuple(bwd)]) / (2 * h)).ravel())
    assert comps[0].size == v[inner].size
    return GradientSamples(np.stack(comps, axis=-1), "finite-difference")


def histogram_density(g: GradientSamples, grid: BinGrid) -> GradientDensity:
    """count / (M * bin_volume); samples outside the grid are counted in meta."""
    if g.d != grid.d:
        raise EstimatorError("sample and bin-grid dimension mismatch")
    counts, _ = np.histogramdd(g.samples, bins=grid.edges())
    covered = int(counts.sum())
    dens = GradientDensity.on_grid(grid, counts / (g.M * grid.volume))
    dens.meta["out_of_range"] = g.M - covered
    dens.meta["M"] = g.M
    return dens


def uniform_samples(domain: BoxDomain, M: int, seed: int) -> np.ndarray:
    """M points uniform on the box from a Philox (counter-based) stream."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    return np.asarray(domain.lo) + domain.widths * rng.random((M, domain.d))


def monte_carlo_density(
    f: TestFunction, domain: BoxDomain | None, M: int, grid: BinGrid, seed: int = 0
) -> GradientDensity:
    """Histogram of grad S(X) for X ~ uniform on the domain."""
    domain = f.domain if domain is None else domain
    if M < 10_000:
        raise EstimatorError(f"Monte-Carlo oracle needs M >= 1e4, got {M}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    counts = np.zeros(grid.shape)
    edges = grid.edges()
    done = 0
    while done < M:
        m = min(MC_CHUNK, M - done)
        x = np.asarray(domain.lo) + domain.widths * rng.random((m, domain.d))
        c, _ = np.histogramdd(f.grad_many(x), bins=edges)
        counts += c
        done += m
    dens = GradientDensity.on_grid(grid, counts / (M * grid.volume))
    dens.meta.update(M=M, seed=int(seed), out_of_range=int(M - counts.sum()))
    return dens


def omega_lattice(grid: BinGrid) -> list[np.ndarray]:
    """Frequencies dual to the bin grid: spacing 2 pi / range, |omega| <= pi / du."""
    out = []
    for k, (a, b) in zip(grid.bins, zip(grid.lo, grid.hi)):
        step = 2 * math.pi / (b - a)
        out.append((np.arange(k) - k // 2) * step)
    return out


def characteristic_function(g: GradientSamples, omegas: list[np.ndarray], chunk: int = 1 << 22) -> np.ndarray:
    """psi(omega) = mean_m exp(i omega . g_m) by direct summation.

    Summation runs over fixed-size sample blocks in order, so the result
    does not depend on scheduling.
    """
    mesh = np.meshgrid(*omegas, indexing="ij")
    W = np.stack([m.ravel() for m in mesh], axis=-1)  # (K, d)
    K = len(W)
    block = max(1, chunk // K)
    psi = np.zeros(K, dtype=complex)
    for start in range(0, g.M, block):
        phase = g.samples[start : start + block] @ W.T
        psi += np.exp(1j * phase).sum(axis=0)
    return (psi / g.M).reshape(mesh[0].shape)


def charfn_density(
    g: GradientSamples, mu_omega: float, omega_per_axis: int, grid: BinGrid
) -> GradientDensity:
    """Density from the discrete inverse transform of the empirical
    characteristic function on the lattice dual to `grid`.

    Every sample carries quadrature weight mu_omega / M of the integral over
    the domain, so psi is the plain sample mean. Negative lobes of the
    truncated inversion are clipped; the removed mass is in meta["clipped_mass"].
    """
    if g.d != grid.d:
        raise EstimatorError("sample and bin-grid dimension mismatch")
    if omega_per_axis < 16 or omega_per_axis % 2:
        raise EstimatorError(f"omega_per_axis must be even and >= 16, got {omega_per_axis}")
    if any(k != omega_per_axis for k in grid.bins):
        raise EstimatorError(f"lattice/bin mismatch: {omega_per_axis} frequencies per axis vs bins {grid.bins}")
    if not mu_omega > 0:
        raise EstimatorError("domain measure must be positive")
    omegas = omega_lattice(grid)
    psi = characteristic_function(g, omegas)

    # P(u_k) = (d omega / 2 pi)^d sum_j psi_j exp(-i omega_j . u_k), done as an FFT
    coeff = psi.astype(complex)
    scale = 1.0
    for axis, (w, u0) in enumerate(zip(omegas, (c[0] for c in grid.centers()))):
        shape = [1] * grid.d
        shape[axis] = -1
        coeff = coeff * np.exp(-1j * w * u0).reshape(shape)
        scale *= (w[1] - w[0]) / (2 * math.pi)
    raw = scale * np.fft.fftn(np.fft.ifftshift(coeff)).real
    negative = float(-raw[raw < 0].sum() * grid.volume)
    vals = np.clip(raw, 0.0, None)
    total = float(vals.sum() * grid.volume)
    dens = GradientDensity.on_grid(grid, vals / total)
    dens.meta.update(clipped_mass=negative, prenorm_mass=total, M=g.M, omega_per_axis=omega_per_axis, mu_omega=float(mu_omega))
    return dens
