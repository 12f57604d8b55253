"""Histogram of oriented gradients as a marginal of the 2-D gradient density."""

from __future__ import annotations

import math

import numpy as np

from .baselines import finite_diff_gradients
from .field import ScalarField
from .wavefn import GradientDensity, choose_tau, power_spectrum_density


def fd_gradient_bound(field: ScalarField) -> float:
    """max |grad|_inf over interior central differences (0 for flat fields)."""
    g = finite_diff_gradients(field).samples
    return float(np.max(np.abs(g))) if g.size else 0.0


def auto_tau(field: ScalarField, margin: float = 1.5) -> float:
    """choose_tau from a finite-difference gradient bound.

    A flat field has no gradient to resolve; any tau puts all the mass at 0,
    so the bound falls back to 1.
    """
    bound = fd_gradient_bound(field)
    return choose_tau(field, bound if bound > 0 else 1.0, margin)


def image_gradient_density(field: ScalarField, tau: float | None = None, taper: bool = False) -> GradientDensity:
    if field.d != 2:
        raise ValueError("gradient densities of images need a 2-D field")
    tau = auto_tau(field) if tau is None else tau
    return power_spectrum_density(field, tau, taper=taper)


def orientation_histogram(density: GradientDensity, n_sectors: int) -> tuple[np.ndarray, float]:
    """Mass per angular sector, integrated over radius.

    Sector j is centered on angle 2 pi j / n_sectors. The bin at u = 0 has
    no orientation; its mass is returned separately.
    """
    if density.d != 2:
        raise ValueError("orientation histograms need a 2-D density")
    if n_sectors < 1:
        raise ValueError("need at least one sector")
    u1, u2 = np.meshgrid(*density.centers, indexing="ij")
    mass = density.masses()
    w = density.widths
    at_origin = (np.abs(u1) < w[0] / 2) & (np.abs(u2) < w[1] / 2)
    angle = np.mod(np.arctan2(u2, u1), 2 * math.pi)
    sector = np.floor(angle / (2 * math.pi / n_sectors) + 0.5).astype(int) % n_sectors
    hist = np.bincount(sector[~at_origin], weights=mass[~at_origin], minlength=n_sectors)
    return hist, float(mass[at_origin].sum())
