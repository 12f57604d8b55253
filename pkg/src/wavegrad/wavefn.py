"""Wave-function estimator of gradient densities.

The field S is turned into phi = exp(iS/tau); the squared modulus of its
scaled Fourier transform is a probability density over gradient space.
Frequency bin m on an axis of length L corresponds to the gradient value
u = 2 pi tau m / L, so bins are Delta u = 2 pi tau / L wide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from .field import ScalarField, GridSpec

MIN_SAMPLES_PER_AXIS = 8


class EstimatorError(ValueError):
    pass


def check_tau(tau: float) -> float:
    tau = float(tau)
    if not math.isfinite(tau) or tau <= 0:
        raise EstimatorError(f"tau must be a positive finite number, got {tau}")
    return tau


# ---------------------------------------------------------------- bin grids

@dataclass(frozen=True)
class BinGrid:
    """Uniform analysis bins: `bins[i]` equal cells on [lo[i], hi[i]]."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    bins: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(a) for a in np.atleast_1d(self.lo))
        hi = tuple(float(b) for b in np.atleast_1d(self.hi))
        bins = tuple(int(k) for k in np.atleast_1d(self.bins))
        if len(bins) == 1 and len(lo) > 1:
            bins = bins * len(lo)
        if not (len(lo) == len(hi) == len(bins)):
            raise EstimatorError("bin grid lo/hi/bins differ in dimension")
        if any(b <= a for a, b in zip(lo, hi)) or any(k < 1 for k in bins):
            raise EstimatorError(f"invalid bin grid lo={lo} hi={hi} bins={bins}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "bins", bins)

    @classmethod
    def symmetric(cls, half_width: float | Sequence[float], bins: int | Sequence[int], d: int = 1) -> "BinGrid":
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), (d,))
        b = np.broadcast_to(np.asarray(bins, dtype=int), (d,))
        return cls(tuple(-hw), tuple(hw), tuple(b))

    @property
    def d(self) -> int:
        return len(self.bins)

    @property
    def widths(self) -> np.ndarray:
        return (np.subtract(self.hi, self.lo)) / np.asarray(self.bins, dtype=float)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.bins

    def edges(self) -> list[np.ndarray]:
        return [np.linspace(a, b, k + 1) for a, b, k in zip(self.lo, self.hi, self.bins)]

    def centers(self) -> list[np.ndarray]:
        return [a + (np.arange(k) + 0.5) * w for a, k, w in zip(self.lo, self.bins, self.widths)]

    def center_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.centers(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


# ---------------------------------------------------------------- densities

@dataclass(eq=False)
class GradientDensity:
    """Piecewise-constant density over gradient space.

    ``centers`` holds one uniformly spaced coordinate array per axis and
    ``values`` has shape ``tuple(len(c) for c in centers)``. ``mask`` marks
    bins excluded from comparisons (True = excluded).
    """

    centers: list[np.ndarray]
    values: np.ndarray
    tau: float | None = None
    mask: np.ndarray | None = None
    prenorm_mass: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.centers = [np.asarray(c, dtype=float) for c in self.centers]
        shape = tuple(len(c) for c in self.centers)
        self.values = np.asarray(self.values, dtype=float).reshape(shape)
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise EstimatorError("density values must be finite and nonnegative")
        for c in self.centers:
            if len(c) > 1 and not np.allclose(np.diff(c), c[1] - c[0], rtol=1e-9, atol=1e-12):
                raise EstimatorError("bin centers must be uniformly spaced")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool).reshape(shape)

    @classmethod
    def on_grid(cls, grid: BinGrid, values, **kw) -> "GradientDensity":
        dens = cls(grid.centers(), values, **kw)
        # single-bin axes carry no spacing information
        dens.meta.setdefault("widths", grid.widths.tolist())
        return dens

    @property
    def d(self) -> int:
        return len(self.centers)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def widths(self) -> np.ndarray:
        if "widths" in self.meta:
            return np.asarray(self.meta["widths"], dtype=float)
        return np.array([c[1] - c[0] for c in self.centers])

    @property
    def bin_volume(self) -> float:
        return float(np.prod(self.widths))

    def edges(self) -> list[np.ndarray]:
        return [np.append(c - w / 2, c[-1] + w / 2) for c, w in zip(self.centers, self.widths)]

    def bin_grid(self) -> BinGrid:
        e = self.edges()
        return BinGrid(tuple(x[0] for x in e), tuple(x[-1] for x in e), self.shape)

    def covered_range(self) -> tuple[np.ndarray, np.ndarray]:
        e = self.edges()
        return np.array([x[0] for x in e]), np.array([x[-1] for x in e])

    def total_mass(self) -> float:
        return float(self.values.sum() * self.bin_volume)

    def masses(self) -> np.ndarray:
        return self.values * self.bin_volume

    def argmax_center(self) -> np.ndarray:
        idx = np.unravel_index(int(np.argmax(self.values)), self.shape)
        return np.array([c[i] for c, i in zip(self.centers, idx)])

    def bin_index(self, u) -> tuple[int, ...]:
        """Index of the bin containing u (nearest center per axis)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        lo, hi = self.covered_range()
        if u.size != self.d or np.any(u < lo) or np.any(u > hi):
            raise EstimatorError(f"u={u.tolist()} outside covered range [{lo.tolist()}, {hi.tolist()}]")
        idx = []
        for c, w, x in zip(self.centers, self.widths, u):
            i = int(np.floor((x - (c[0] - w / 2)) / w))
            idx.append(min(max(i, 0), len(c) - 1))
        return tuple(idx)

    def value_at(self, u) -> float:
        """Binned (cell-average) value at u."""
        return float(self.values[self.bin_index(u)])

    def box_mass(self, lo, hi) -> float:
        """Exact mass of the piecewise-constant density over the box [lo, hi]."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        out = self.values * self.bin_volume
        for axis, (e, a, b) in enumerate(zip(self.edges(), lo, hi)):
            overlap = np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None) / np.diff(e)
            out = _weight_axis(out, overlap, axis)
        return float(np.sum(out))

    def rebin(self, grid: BinGrid) -> "GradientDensity":
        """Integrate this density over the cells of `grid` (mass-conserving
        on the overlap; mass outside `grid` is dropped)."""
        if grid.d != self.d:
            raise EstimatorError("rebin grid dimension mismatch")
        mass = self.values * self.bin_volume
        for axis, (e, new_e) in enumerate(zip(self.edges(), grid.edges())):
            mass = _rebin_axis(mass, e, new_e, axis)
        out = GradientDensity.on_grid(grid, np.clip(mass, 0.0, None) / grid.volume, tau=self.tau)
        out.meta["source_prenorm_mass"] = self.prenorm_mass
        return out

    # ------------------------------------------------------------ csv
    def to_csv(self, path: str | Path) -> None:
        tau = "none" if self.tau is None else repr(self.tau)
        header = (
            f"# tau={tau} bin_volume={self.bin_volume!r} axes={self.d} "
            f"bins={','.join(str(k) for k in self.shape)} "
            f"widths={','.join(repr(float(w)) for w in self.widths)}"
        )
        if self.prenorm_mass is not None:
            header += f" prenorm_mass={self.prenorm_mass!r}"
        cols = ",".join(f"u_{i + 1}" for i in range(self.d)) + ",value"
        mesh = np.meshgrid(*self.centers, indexing="ij")
        table = np.column_stack([m.ravel() for m in mesh] + [self.values.ravel()])
        lines = [header, cols] + [",".join(repr(float(x)) for x in row) for row in table]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "GradientDensity":
        lines = Path(path).read_text().splitlines()
        meta = dict(tok.split("=", 1) for tok in lines[0].lstrip("#").split())
        d = int(meta["axes"])
        shape = tuple(int(k) for k in meta["bins"].split(","))
        widths = [float(w) for w in meta["widths"].split(",")]
        table = np.array([[float(x) for x in ln.split(",")] for ln in lines[2:] if ln.strip()])
        if table.shape != (int(np.prod(shape)), d + 1):
            raise EstimatorError(f"density CSV body has shape {table.shape}, header implies {(int(np.prod(shape)), d + 1)}")
        grids = table[:, :d].reshape(shape + (d,))
        centers = [grids[(0,) * i + (slice(None),) + (0,) * (d - i - 1)][..., i] for i in range(d)]
        tau = None if meta["tau"] == "none" else float(meta["tau"])
        prenorm = float(meta["prenorm_mass"]) if "prenorm_mass" in meta else None
        return cls(centers, table[:, d].reshape(shape), tau=tau, prenorm_mass=prenorm, meta={"widths": widths})


def _weight_axis(arr: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    shape = [1] * arr.ndim
    shape[axis] = -1
    return arr * w.reshape(shape)


def _rebin_axis(mass: np.ndarray, edges: np.ndarray, new_edges: np.ndarray, axis: int) -> np.ndarray:
    # cumulative mass along the axis, linearly interpolated at new edges
    mass = np.moveaxis(mass, axis, 0)
    cum = np.concatenate([np.zeros((1,) + mass.shape[1:]), np.cumsum(mass, axis=0)], axis=0)
    n = mass.shape[0]
    pos = np.clip((new_edges - edges[0]) / (edges[1] - edges[0]), 0.0, n)
    i = np.minimum(np.floor(pos).astype(int), n - 1)
    t = (pos - i).reshape((-1,) + (1,) * (mass.ndim - 1))
    at_edges = cum[i] + t * (cum[i + 1] - cum[i])
    return np.moveaxis(np.diff(at_edges, axis=0), 0, axis)


@dataclass(frozen=True)
class BallRegion:
    """Infinity-norm ball |u - center|_inf <= radius."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.center))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise EstimatorError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return (2.0 * self.radius) ** self.d

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - self.radius

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + self.radius


def integrate_ball(density: GradientDensity, region: BallRegion) -> float:
    """Mass of `density` inside the ball."""
    if region.d != density.d:
        raise EstimatorError("ball and density differ in dimension")
    lo, hi = density.covered_range()
    if np.any(region.lo < lo) or np.any(region.hi > hi):
        raise EstimatorError(
            f"ball [{region.lo.tolist()}, {region.hi.tolist()}] outside covered range [{lo.tolist()}, {hi.tolist()}]"
        )
    return density.box_mass(region.lo, region.hi)


def mean_in_ball(density: GradientDensity, region: BallRegion) -> float:
    return integrate_ball(density, region) / region.volume


# ---------------------------------------------------------------- estimator

def wave_function(field: ScalarField, tau: float) -> np.ndarray:
    tau = check_tau(tau)
    return np.exp(1j * (field.values / tau))


def nyquist_range(grid: GridSpec, tau: float) -> np.ndarray:
    """Largest representable |u_i| per axis: pi tau / dx_i."""
    return math.pi * check_tau(tau) / grid.spacing()


def choose_tau(field: ScalarField | GridSpec, grad_bound: float, margin: float = 1.5) -> float:
    """Smallest tau whose Nyquist range covers margin * grad_bound on every axis."""
    if not grad_bound > 0:
        raise EstimatorError(f"grad_bound must be positive, got {grad_bound}")
    if not margin > 0:
        raise EstimatorError(f"margin must be positive, got {margin}")
    grid = field.grid if isinstance(field, ScalarField) else field
    return float(margin * grad_bound * np.max(grid.spacing()) / math.pi)


def gradient_centers(grid: GridSpec, tau: float) -> list[np.ndarray]:
    """DC-centered gradient coordinates u = 2 pi tau m / L of the FFT bins."""
    tau = check_tau(tau)
    out = []
    for n, L in zip(grid.n, grid.domain.widths):
        m = np.arange(n) - n // 2
        out.append(2.0 * math.pi * tau * m / L)
    return out


def cosine_taper(grid: GridSpec, fraction: float = 0.05) -> np.ndarray:
    """Separable raised-cosine window falling to 0 over the outer `fraction` of each axis."""
    win = np.ones(grid.n)
    for axis, n in enumerate(grid.n):
        k = max(1, int(round(fraction * n)))
        w = np.ones(n)
        ramp = 0.5 * (1 - np.cos(math.pi * (np.arange(k) + 0.5) / k))
        w[:k] = ramp
        w[n - k :] = ramp[::-1]
        shape = [1] * grid.d
        shape[axis] = n
        win = win * w.reshape(shape)
    return win


def _check_grid(field: ScalarField) -> None:
    if any(n < MIN_SAMPLES_PER_AXIS for n in field.grid.n):
        raise EstimatorError(f"field too small: need >= {MIN_SAMPLES_PER_AXIS} samples per axis, got {field.grid.n}")


def scaled_transform(field: ScalarField, tau: float, taper: bool = False) -> tuple[list[np.ndarray], np.ndarray]:
    """Riemann-sum approximation of the scaled Fourier transform F_tau at
    the FFT gradient bins, DC-centered.

    The phase factor for the first cell center is applied so values are
    comparable with the continuous transform over the box.
    """
    tau = check_tau(tau)
    _check_grid(field)
    grid = field.grid
    phi = wave_function(field, tau)
    if taper:
        phi = phi * cosine_taper(grid)
    spec = np.fft.fftshift(np.fft.fftn(phi))
    d = grid.d
    mu = grid.domain.measure()
    dx = grid.spacing()
    scale = float(np.prod(dx)) / ((2 * math.pi * tau) ** (d / 2) * math.sqrt(mu))
    centers = gradient_centers(grid, tau)
    for axis, (u, x0) in enumerate(zip(centers, (c[0] for c in grid.axis_coords()))):
        shape = [1] * d
        shape[axis] = -1
        spec = spec * np.exp(-1j * u * x0 / tau).reshape(shape)
    return centers, scale * spec


def power_spectrum_density(field: ScalarField, tau: float, taper: bool = False) -> GradientDensity:
    """Normalized power spectrum of exp(iS/tau) as a density over gradient space.

    Gradients beyond ``nyquist_range`` alias; pick tau with ``choose_tau``.
    The mass before renormalization is kept in ``prenorm_mass`` (exactly 1
    up to rounding without the taper, by discrete Parseval).
    """
    tau = check_tau(tau)
    _check_grid(field)
    grid = field.grid
    phi = wave_function(field, tau)
    if taper:
        phi = phi * cosine_taper(grid)
    power = np.abs(np.fft.fftshift(np.fft.fftn(phi))) ** 2
    d = grid.d
    dx2 = float(np.prod(grid.spacing())) ** 2
    values = power * dx2 / ((2 * math.pi * tau) ** d * grid.domain.measure())
    widths = 2 * math.pi * tau / grid.domain.widths
    bin_volume = float(np.prod(widths))
    prenorm = float(values.sum() * bin_volume)
    values = values / prenorm
    dens = GradientDensity(gradient_centers(grid, tau), values, tau=tau, prenorm_mass=prenorm)
    dens.meta["widths"] = widths.tolist()
    dens.meta["nyquist_range"] = nyquist_range(grid, tau).tolist()
    return dens
