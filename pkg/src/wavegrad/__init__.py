"""Gradient densities from the power spectrum of exp(iS/tau)."""
