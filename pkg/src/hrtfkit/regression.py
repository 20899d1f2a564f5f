"""Per-cell multiple linear regression of PC weights on anthropometry.

One least-squares fit per (ear, direction, component): the design matrix
is shared (intercept column of ones followed by the eight selected
measurements, in fixed order), the response is that cell's weight across
training subjects.  Solved by Householder QR; the literal
normal-equations route lives in hrtfkit.testkit as a cross-check oracle.
"""

from dataclasses import dataclass

import numpy as np

from .measurements import MEASUREMENT_LABELS

# The eight selected measurements, in design-matrix column order
# (after the intercept): x1, x3, x6, x12, d1, d3, d5, d6.
FEATURE_LABELS: tuple[str, ...] = ("x1", "x3", "x6", "x12", "d1", "d3", "d5", "d6")
DEFAULT_FEATURE_INDICES: tuple[int, ...] = tuple(
    MEASUREMENT_LABELS.index(lbl) for lbl in FEATURE_LABELS)

N_COEFFS = 9  # intercept + 8 features
MIN_TRAINING_SUBJECTS = 10  # below this the 9-column design risks rank collapse

# Relative pivot threshold for declaring the design rank-deficient.
RANK_TOLERANCE = 1e-12


class SingularDesignError(ValueError):
    """Design matrix is (numerically) rank deficient."""

    def __init__(self, message, smallest_pivot):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


@dataclass(frozen=True)
class DesignMatrix:
    """Subjects x 9 regression design (column 0 all ones).

    offsets/scales record the optional feature standardization applied to
    the raw measurements; predictions are invariant to it.
    """
    values: np.ndarray
    subjects: tuple[str, ...]
    feature_indices: tuple[int, ...]
    offsets: np.ndarray
    scales: np.ndarray


@dataclass(frozen=True)
class RegressionModel:
    """Fitted coefficients, indexed [ear][direction][component] -> 9-vector."""
    coefficients: np.ndarray          # (2, n_directions, q, 9)
    conditioning: np.ndarray          # (2, n_directions, q) diagnostic
    feature_order: tuple[str, ...]
    offsets: np.ndarray               # (8,) standardization offsets (0 if raw)
    scales: np.ndarray                # (8,) standardization scales (1 if raw)

    @property
    def n_directions(self):
        return self.coefficients.shape[1]

    @property
    def q(self):
        return self.coefficients.shape[2]


def build_design_matrix(table, feature_indices=DEFAULT_FEATURE_INDICES,
                        standardize=False):
    """Assemble the regression design from an anthropometry table.

    Every selected feature must be present (finite) for every subject;
    NaN raises with the offending subject and measurement named.
    """
    feature_indices = tuple(int(i) for i in feature_indices)
    if len(feature_indices) != 8 or len(set(feature_indices)) != 8:
        raise ValueError(f"feature_indices must be 8 distinct columns, got {feature_indices}")
    subjects = tuple(table.subjects)
    if len(subjects) < MIN_TRAINING_SUBJECTS:
        raise ValueError(
            f"need at least {MIN_TRAINING_SUBJECTS} training subjects for a "
            f"9-coefficient regression, got {len(subjects)}")
    feats = np.asarray(table.values, dtype=np.float64)[:, feature_indices]
    bad = np.argwhere(~np.isfinite(feats))
    if bad.size:
        s, f = bad[0]
        raise ValueError(
            f"subject {subjects[s]!r} is missing selected measurement "
            f"{MEASUREMENT_LABELS[feature_indices[f]]!r}")
    if standardize:
        offsets = feats.mean(axis=0)
        scales = feats.std(axis=0)
        if np.any(scales == 0.0):
            j = int(np.argmax(scales == 0.0))
            raise ValueError(
                f"cannot standardize constant measurement "
                f"{MEASUREMENT_LABELS[feature_indices[j]]!r}")
        feats = (feats - offsets) / scales
    else:
        offsets = np.zeros(8)
        scales = np.ones(8)
    X = np.empty((len(subjects), N_COEFFS))
    X[:, 0] = 1.0
    X[:, 1:] = feats
    return DesignMatrix(values=X, subjects=subjects,
                        feature_indices=feature_indices,
                        offsets=offsets, scales=scales)


class _QrSolver:
    """Shared QR factorization of the design; solves one cell per call."""

    def __init__(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < X.shape[1]:
            raise ValueError(f"design must have at least as many rows as columns, "
                             f"got shape {X.shape}")
        self.Q, self.R = np.linalg.qr(X, mode="reduced")
        diag = np.abs(np.diag(self.R))
        largest = float(diag.max())
        smallest = float(diag.min())
        if largest == 0.0 or smallest <= RANK_TOLERANCE * largest:
            raise SingularDesignError(
                f"design matrix is rank deficient (smallest pivot {smallest:.3e})",
                smallest_pivot=smallest)
        self.condition = largest / smallest

    def solve(self, w):
        rhs = self.Q.T @ w
        n = self.R.shape[1]
        beta = np.zeros(n)
        for i in range(n - 1, -1, -1):
            beta[i] = (rhs[i] - self.R[i, i + 1:] @ beta[i + 1:]) / self.R[i, i]
        return beta


def fit(X, w):
    """Least-squares coefficients for one weight vector (QR route)."""
    if isinstance(X, DesignMatrix):
        X = X.values
    w = np.asarray(w, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if w.shape != (X.shape[0],):
        raise ValueError(f"w must have one entry per design row, got {w.shape}")
    return _QrSolver(X).solve(w)


def fit_all(pca_model, design):
    """Fit every (ear, direction, component) cell of a PCA model.

    The model's weight columns are regrouped per subject using its
    column_index; the design's subjects must be exactly the training
    subjects, in order.
    """
    subjects = design.subjects
    cols = pca_model.column_index
    n_dir = 1 + max(d for (_, _, d) in cols)
    q = pca_model.q
    expected = [(s, e, d) for s in subjects for e in (0, 1) for d in range(n_dir)]
    if list(cols) != expected:
        raise ValueError("PCA column_index does not match the design subjects "
                         "(subject-major ear/direction order expected)")
    # weights (q, M) -> (subjects, 2, n_dir, q)
    per_subject = pca_model.weights.T.reshape(len(subjects), 2, n_dir, q)
    solver = _QrSolver(design.values)
    coeffs = np.empty((2, n_dir, q, N_COEFFS))
    for ear in range(2):
        for d in range(n_dir):
            for i in range(q):
                try:
                    coeffs[ear, d, i] = solver.solve(per_subject[:, ear, d, i])
                except Exception as exc:
                    raise RuntimeError(
                        f"regression failed at ear={ear}, direction={d}, "
                        f"component={i}: {exc}") from exc
    conditioning = np.full((2, n_dir, q), solver.condition)
    return RegressionModel(coefficients=coeffs, conditioning=conditioning,
                           feature_order=FEATURE_LABELS,
                           offsets=np.asarray(design.offsets, dtype=np.float64),
                           scales=np.asarray(design.scales, dtype=np.float64))


def predict(model, features):
    """Predicted weights (2, n_directions, q) for one 8-feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (8,):
        raise ValueError(f"expected 8 features, got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise ValueError("anthropometric features must be finite")
    x = np.empty(N_COEFFS)
    x[0] = 1.0
    x[1:] = (features - model.offsets) / model.scales
    return np.tensordot(model.coefficients, x, axes=([3], [0]))
