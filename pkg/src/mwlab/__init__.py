"""Gibbs measures on binary subshifts, the random wavelet series built from
them, and estimators for their graph and range singularity spectra."""

__version__ = "0.1.0"
