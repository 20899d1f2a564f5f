"""Principal-components model of magnitude HRTF spectra.

The observation matrix H is bins x observations (one column per
(subject, ear, direction) magnitude spectrum).  Training subtracts the
empirical mean, forms the sample covariance D D^T / (M - 1), and
diagonalizes it with a cyclic Jacobi eigensolver; the model keeps the
full eigenvalue spectrum, the q leading orthonormal basis columns, and
the projected weights.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dsp import MAG_FLOOR_RATIO, MagnitudeFloorWarning

DEFAULT_COMPONENTS = 10

# Jacobi controls: off-diagonal threshold relative to ||S||_F, sweep cap.
JACOBI_TOL_FACTOR = 1e-12
JACOBI_MAX_SWEEPS = 100


class ConvergenceError(RuntimeError):
    """Eigensolver failed to reach the off-diagonal threshold."""


@dataclass(frozen=True)
class PcaModel:
    """Mean vector, retained orthonormal basis, eigenvalues and weights.

    eigenvalues holds the full descending spectrum (length = bin count)
    even when only q basis columns are retained; weights is q x M for the
    training columns described by column_index (subject id, ear index,
    direction index).
    """
    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    weights: np.ndarray
    column_index: tuple[tuple[str, int, int], ...]

    @property
    def n_bins(self):
        return self.mean.size

    @property
    def q(self):
        return self.basis.shape[1]


def compute_mean(H):
    """Column mean of the observation matrix (empirical mean spectrum)."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] == 0:
        raise ValueError("H must be a 2-D matrix with at least one column")
    return H.mean(axis=1)


def center(H, mean):
    """Mean-subtracted observation matrix D = H - mean * ones."""
    H = np.asarray(H, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if H.ndim != 2 or mean.shape != (H.shape[0],):
        raise ValueError(f"mean length {mean.shape} does not match H rows {H.shape}")
    return H - mean[:, None]


def covariance(D):
    """Sample covariance S = D D^T / (M - 1) of a centered matrix."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[1] < 2:
        raise ValueError("covariance needs at least two observations")
    return D @ D.T / (D.shape[1] - 1)


def _fix_signs(vectors):
    """Sign convention: each column's largest-magnitude entry is positive
    (first such entry on exact magnitude ties)."""
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        if col[np.argmax(np.abs(col))] < 0.0:
            vectors[:, j] = -col
    return vectors


def eig_symmetric(S, max_sweeps=JACOBI_MAX_SWEEPS, tol_factor=JACOBI_TOL_FACTOR):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvector columns in matching
    order, sign-fixed).  Raises ValueError on asymmetric input and
    ConvergenceError when the sweep cap is hit.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S must be square")
    fro = float(np.sqrt(np.sum(S * S)))
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym > 1e-10 * (1.0 + fro):
        raise ValueError(f"matrix is not symmetric (max |S - S^T| = {asym:.3e})")
    try:
        values, vectors, _ = _kernels.jacobi_eigh(S, max_sweeps, tol_factor)
    except RuntimeError as exc:
        raise ConvergenceError(str(exc)) from None
    order = np.argsort(-values, kind="stable")
    return values[order], _fix_signs(vectors[:, order])


def project(D, basis):
    """Weights W = basis^T D of centered observations on an orthonormal basis."""
    D = np.asarray(D, dtype=np.float64)
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or D.ndim != 2 or basis.shape[0] != D.shape[0]:
        raise ValueError("basis rows must match D rows")
    gram_err = float(np.max(np.abs(basis.T @ basis - np.eye(basis.shape[1]))))
    if gram_err > 1e-8:
        raise ValueError(f"basis is not orthonormal (max |V^T V - I| = {gram_err:.3e})")
    return basis.T @ D


def reconstruct(model, weights):
    """Magnitude spectrum V w + mean, with negative bins clamped positive.

    The linear model can undershoot zero; bins below the floor are lifted
    to MAG_FLOOR_RATIO times the spectrum peak (minimum-phase synthesis
    needs strictly positive magnitude) and reported via
    MagnitudeFloorWarning.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (model.q,):
        raise ValueError(f"expected {model.q} weights, got shape {weights.shape}")
    raw = model.basis @ weights + model.mean
    clamped, n = clamp_positive(raw)
    if n:
        warnings.warn(f"reconstruct: clamped {n} negative magnitude bin(s)",
                      MagnitudeFloorWarning, stacklevel=2)
    return clamped


def clamp_positive(mags):
    """Clamp rows (or a vector) of model magnitudes to a positive floor.

    Returns (clamped copy, number of lifted bins).
    """
    mags = np.asarray(mags, dtype=np.float64)
    vec = mags.ndim == 1
    rows = mags[None, :] if vec else mags
    peaks = rows.max(axis=1)
    if np.any(peaks <= 0.0):
        raise ValueError("magnitude spectrum has no positive bin")
    floors = (MAG_FLOOR_RATIO * peaks)[:, None]
    n = int(np.sum(rows < floors))
    out = np.maximum(rows, floors)
    return (out[0] if vec else out), n


def fit_pca(H, q, column_index):
    """Train a PcaModel from a bins x observations magnitude matrix."""
    H = np.asarray(H, dtype=np.float64)
    if not 1 <= q <= H.shape[0]:
        raise ValueError(f"q must be in 1..{H.shape[0]}, got {q}")
    if len(column_index) != H.shape[1]:
        raise ValueError("column_index length must match the observation count")
    mean = compute_mean(H)
    D = center(H, mean)
    S = covariance(D)
    values, vectors = eig_symmetric(S)
    values = np.maximum(values, 0.0)  # covariance is PSD; strip roundoff negatives
    basis = vectors[:, :q].copy()
    weights = project(D, basis)
    return PcaModel(mean=mean, basis=basis, eigenvalues=values,
                    weights=weights, column_index=tuple(column_index))


@dataclass(frozen=True)
class VarianceRow:
    eigenvalue: float
    percent: float
    cumulative_percent: float


def variance_report(eigenvalues):
    """Per-component explained variance: (eigenvalue, percent, cumulative)."""
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    if eigenvalues.ndim != 1 or eigenvalues.size == 0:
        raise ValueError("eigenvalues must be a non-empty vector")
    if np.any(eigenvalues < 0.0):
        raise ValueError("eigenvalues must be non-negative")
    total = float(eigenvalues.sum())
    if total == 0.0:
        raise ValueError("all eigenvalues are zero; variance percentages undefined")
    percents = 100.0 * eigenvalues / total
    cumulative = np.cumsum(percents)
    return [VarianceRow(float(v), float(p), float(c))
            for v, p, c in zip(eigenvalues, percents, cumulative)]
