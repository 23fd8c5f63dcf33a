"""Input checks shared by the estimator classes."""

from __future__ import annotations

import numpy as np

from .lattice import DensityField


def check_density_rows(x, lattice):
    """Coerce sources to a 2-D complex array with one density per row.

    Parameters
    ----------
    x : DensityField, sequence of DensityField or array_like
        Fourier amplitudes on ``lattice.diff_modes``; a 1-D array is one source.
    lattice : Lattice

    Returns
    -------
    ndarray, shape (n_samples, lattice.n_diff), complex
    """
    if isinstance(x, DensityField):
        x = [x]
    if isinstance(x, (list, tuple)) and x and all(isinstance(f, DensityField) for f in x):
        for f in x:
            lattice.check_same(f.lattice)
        x = [f.values for f in x]
    arr = np.asarray(x)
    if arr.dtype == object or not np.issubdtype(arr.dtype, np.number):
        raise ValueError("sources must be numeric")
    arr = arr.astype(complex)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got {arr.ndim} dimensions")
    if arr.shape[1] != lattice.n_diff:
        raise ValueError(
            f"expected {lattice.n_diff} Fourier amplitudes per source, got {arr.shape[1]}"
        )
    if arr.shape[0] == 0:
        raise ValueError("no sources given")
    if not np.all(np.isfinite(arr)):
        raise ValueError("sources contain NaN or infinity")
    return arr


def check_single_source(x, lattice):
    """Like :func:`check_density_rows` but require exactly one source."""
    arr = check_density_rows(x, lattice)
    if arr.shape[0] != 1:
        raise ValueError(f"expected one source, got {arr.shape[0]}")
    return DensityField(lattice, arr[0])
