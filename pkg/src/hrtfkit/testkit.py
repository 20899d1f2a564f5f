"""Synthetic data generators and brute-force reference implementations.

The generator runs the synthesis model forward: draw a smooth positive
mean spectrum and a smooth orthonormal basis, plant per-cell regression
coefficients, derive each subject's weights exactly linearly from their
anthropometry, build magnitudes, and synthesize HRIRs by minimum phase
plus spherical-head integer delays.  A pipeline trained on the result
should recover everything up to solver roundoff, which is what the
acceptance suite checks.

Smooth (low-order cosine mixture) spectra are used on purpose: their
minimum-phase signals decay fast, so delaying and truncating to the
archive length loses only numerically negligible tail energy and the
planted magnitudes stay exact ground truth.

The naive_* functions are unoptimized direct-formula oracles for tests.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .dataset import (AnthropometryTable, Direction, HrirArchive,
                      save_anthropometry, save_archive, validate_archive)
from .measurements import MEASUREMENT_LABELS, N_MEASUREMENTS
from .pca import clamp_positive
from .regression import DEFAULT_FEATURE_INDICES, N_COEFFS

SPEED_OF_SOUND = 343.0  # m/s
BASE_DELAY_SAMPLES = 24

# CIPIC horizontal-plane azimuth grid (degrees, negative = left).
CIPIC_AZIMUTHS: tuple[float, ...] = tuple(
    [-80.0, -65.0, -55.0] + [float(a) for a in range(-45, 50, 5)] + [55.0, 65.0, 80.0])

# Plausible uniform ranges per measurement column (cm / deg), loosely
# mimicking the published population spreads; only the scales matter.
_ANTHRO_RANGES: dict[str, tuple[float, float]] = {
    "x1": (12.0, 18.0), "x2": (14.0, 24.0), "x3": (16.0, 24.0),
    "x4": (-2.0, 2.0), "x5": (-2.0, 2.0), "x6": (9.0, 14.0),
    "x7": (5.0, 12.0), "x8": (9.0, 14.0), "x9": (26.0, 42.0),
    "x10": (14.0, 26.0), "x11": (18.0, 30.0), "x12": (34.0, 52.0),
    "x13": (-6.0, 6.0), "x14": (150.0, 195.0), "x15": (75.0, 100.0),
    "x16": (-15.0, 15.0), "x17": (-15.0, 15.0),
    "d1": (1.0, 2.5), "d2": (0.4, 1.2), "d3": (1.2, 3.0), "d4": (1.0, 2.2),
    "d5": (5.0, 8.0), "d6": (2.5, 4.5), "d7": (0.2, 1.2), "d8": (8.0, 13.0),
    "t1": (-10.0, 50.0), "t2": (5.0, 45.0),
}


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    """A generated archive plus the ground truth it was built from."""
    seed: int
    q: int
    noise_level: float
    feature_indices: tuple[int, ...]
    archive: HrirArchive
    anthro: AnthropometryTable
    true_mean: np.ndarray      # (n_bins,)
    true_basis: np.ndarray     # (n_bins, q), orthonormal columns
    true_beta: np.ndarray      # (2, n_directions, q, 9)
    true_weights: np.ndarray   # (subjects, 2, n_directions, q), noise included
    true_magnitudes: np.ndarray  # (subjects, 2, n_directions, n_bins)
    delays: np.ndarray         # (subjects, 2, n_directions) integer samples


def default_directions(n=50):
    """First n of the 50 standard slots: 25 front azimuths then 25 rear."""
    if not 1 <= n <= 50:
        raise ValueError("n must be between 1 and 50")
    slots = ([Direction(a, "front") for a in CIPIC_AZIMUTHS]
             + [Direction(a, "rear") for a in CIPIC_AZIMUTHS])
    return tuple(slots[:n]) if n <= 25 else tuple(slots[:25] + slots[25:25 + n - 25])


def _smooth_columns(rng, n_bins, n_cols, n_harmonics):
    """Full-circle smooth random spectra: rows cover all 2*n_bins DFT bins.

    Columns are mixtures of the circle harmonics cos(2 pi k j / (2 n_bins)),
    which are even about bin 0 and about Nyquist, so each column is a valid
    (C-infinity smooth) real-signal magnitude shape whose first n_bins rows
    determine the rest.  Normalized to unit peak over the first half.
    """
    j = np.arange(2 * n_bins)
    harmonics = np.cos(np.pi * np.outer(np.arange(n_harmonics), j) / n_bins)
    coeffs = rng.normal(size=(n_cols, n_harmonics))
    cols = (coeffs @ harmonics).T
    return cols / np.abs(cols[:n_bins]).max(axis=0)


def _gram_schmidt(columns, n_inner):
    """Modified Gram-Schmidt (two passes per column), with inner products
    over the first n_inner rows only; the remaining rows ride along under
    the same elementary operations."""
    V = np.array(columns, dtype=np.float64)
    q = V.shape[1]
    for j in range(q):
        v = V[:, j]
        for _ in range(2):
            for i in range(j):
                v = v - (V[:n_inner, i] @ v[:n_inner]) * V[:, i]
        norm = np.linalg.norm(v[:n_inner])
        if norm < 1e-10:
            raise ValueError("random columns are numerically dependent; "
                             "raise n_harmonics")
        V[:, j] = v / norm
    return V


def _planted_delays(head_widths_cm, directions, sample_rate):
    """Woodworth-style integer delays: base arrival plus a contralateral
    lag proportional to head width and sin(azimuth)."""
    S = len(head_widths_cm)
    D = len(directions)
    delays = np.empty((S, 2, D), dtype=np.int64)
    for s, width in enumerate(head_widths_cm):
        scale = (width / 100.0) / SPEED_OF_SOUND * sample_rate
        for d, direction in enumerate(directions):
            lag = int(round(scale * np.sin(np.radians(direction.azimuth_deg))))
            delays[s, 0, d] = BASE_DELAY_SAMPLES + max(lag, 0)
            delays[s, 1, d] = BASE_DELAY_SAMPLES + max(-lag, 0)
    return delays


def synth_generate(subjects=37, q=10, seed=0, noise_level=0.0,
                   n_directions=50, hrir_length=256, sample_rate=44100.0,
                   n_bins=dsp.N_BINS):
    """Build a SyntheticWorld; same seed => bit-identical output."""
    if subjects < 10:
        raise ValueError("need at least 10 subjects (regression rank)")
    if not 1 <= q <= n_bins:
        raise ValueError(f"q must be in 1..{n_bins}")
    if hrir_length < 2 * n_bins:
        raise ValueError(f"hrir_length must be >= {2 * n_bins} so delayed "
                         "minimum-phase signals fit without aliasing")
    rng = np.random.default_rng(seed)
    directions = default_directions(n_directions)
    D = len(directions)
    ids = tuple(f"s{i:03d}" for i in range(subjects))

    # full-spectrum (2 * n_bins) shapes; the model-facing ground truth is
    # their first half, and synthesis uses the exact full rows
    mean_full = 1.0 + 0.1 * _smooth_columns(rng, n_bins, 1, 8)[:, 0]
    basis_full = _gram_schmidt(_smooth_columns(rng, n_bins, q, max(12, q + 4)),
                               n_inner=n_bins)
    true_mean = mean_full[:n_bins].copy()
    true_basis = basis_full[:n_bins].copy()

    anthro_values = np.empty((subjects, N_MEASUREMENTS))
    for j, label in enumerate(MEASUREMENT_LABELS):
        lo, hi = _ANTHRO_RANGES[label]
        anthro_values[:, j] = rng.uniform(lo, hi, size=subjects)
    anthro = AnthropometryTable(subjects=ids, values=anthro_values)

    X = np.empty((subjects, N_COEFFS))
    X[:, 0] = 1.0
    X[:, 1:] = anthro_values[:, list(DEFAULT_FEATURE_INDICES)]

    # a gentle perturbation scale keeps ln(magnitude) mild, so minimum-phase
    # tails decay far below the delay-truncation tolerances
    beta_raw = rng.normal(size=(2, D, q, N_COEFFS))
    w_raw = np.einsum("edqc,sc->sedq", beta_raw, X)
    perturb_peak = np.abs(w_raw @ true_basis.T).max()
    scale = 0.12 * true_mean.min() / perturb_peak
    true_beta = beta_raw * scale

    true_weights = np.einsum("edqc,sc->sedq", true_beta, X)
    if noise_level > 0.0:
        true_weights = true_weights + noise_level * rng.normal(size=true_weights.shape)
    mags = true_weights.reshape(-1, q) @ true_basis.T + true_mean
    mags, n_clamped = clamp_positive(mags)
    if n_clamped and noise_level == 0.0:
        raise AssertionError("noise-free construction produced non-positive bins")

    delays = _planted_delays(anthro_values[:, 0], directions, sample_rate)
    full_mags = true_weights.reshape(-1, q) @ basis_full.T + mean_full
    full_mags, _ = clamp_positive(full_mags)
    min_phase, _, _ = dsp._min_phase_from_full_mag(full_mags)
    data = np.empty((subjects, 2, D, hrir_length))
    flat_delays = delays.reshape(-1)
    for i in range(min_phase.shape[0]):
        data.reshape(-1, hrir_length)[i] = dsp.insert_delay(
            min_phase[i], int(flat_delays[i]), hrir_length)

    archive = validate_archive(HrirArchive(
        sample_rate=float(sample_rate), hrir_length=int(hrir_length),
        subjects=ids, directions=directions, data=data))
    return SyntheticWorld(
        seed=seed, q=q, noise_level=noise_level,
        feature_indices=DEFAULT_FEATURE_INDICES, archive=archive, anthro=anthro,
        true_mean=true_mean, true_basis=true_basis, true_beta=true_beta,
        true_weights=true_weights,
        true_magnitudes=mags.reshape(subjects, 2, D, n_bins), delays=delays)


def write_world(world, out_dir):
    """Write archive + anthropometry in the dataset formats, plus the
    ground truth as JSON; returns (manifest, csv, ground-truth) paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = save_archive(world.archive, out_dir / "archive")
    anthro_path = out_dir / "anthropometry.csv"
    save_anthropometry(world.anthro, anthro_path)
    truth = {
        "seed": world.seed,
        "q": world.q,
        "noise_level": world.noise_level,
        "feature_indices": list(world.feature_indices),
        "subjects": list(world.archive.subjects),
        "true_mean": world.true_mean.tolist(),
        "true_basis": world.true_basis.tolist(),
        "true_beta": world.true_beta.tolist(),
        "true_weights": world.true_weights.tolist(),
        "delays": world.delays.tolist(),
    }
    truth_path = out_dir / "ground_truth.json"
    truth_path.write_text(json.dumps(truth, sort_keys=True) + "\n")
    return manifest, anthro_path, truth_path


# ---------------------------------------------------------------------------
# Reference oracles (tests only; direct formulas, no optimization)

def naive_dft(x, n_fft=None, inverse=False):
    """O(N^2) DFT by the definition sum."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.size if n_fft is None else int(n_fft)
    padded = np.zeros(n, dtype=np.complex128)
    padded[:x.size] = x
    sign = 2j if inverse else -2j
    W = np.exp(sign * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    out = W @ padded
    return out / n if inverse else out


def naive_covariance(D):
    """Triple-loop sample covariance D D^T / (M - 1)."""
    D = np.asarray(D, dtype=np.float64)
    n, m = D.shape
    S = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(m):
                acc += D[i, k] * D[j, k]
            S[i, j] = acc / (m - 1)
    return S


def charpoly_coeffs(S):
    """Characteristic polynomial coefficients (monic, descending powers)
    via the Faddeev-LeVerrier recurrence."""
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    coeffs = np.empty(n + 1)
    coeffs[0] = 1.0
    M = np.zeros_like(S)
    for k in range(1, n + 1):
        M = S @ M + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(S @ M) / k
    return coeffs


def charpoly_eigs(S, n_grid=20001, tol=1e-13):
    """Eigenvalues of a symmetric matrix as bisected roots of its
    characteristic polynomial.

    Needs distinct roots (sign changes on a Gershgorin-bounded grid);
    raises when it cannot isolate n of them, which flags a test matrix
    this oracle cannot handle rather than returning something wrong.
    """
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    coeffs = charpoly_coeffs(S)
    radii = np.sum(np.abs(S), axis=1) - np.abs(np.diag(S))
    lo = float(np.min(np.diag(S) - radii)) - 1.0
    hi = float(np.max(np.diag(S) + radii)) + 1.0
    xs = np.linspace(lo, hi, n_grid)
    ps = np.polyval(coeffs, xs)
    roots = []
    for i in range(n_grid - 1):
        a, b = xs[i], xs[i + 1]
        fa, fb = ps[i], ps[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0.0:
            for _ in range(200):
                mid = 0.5 * (a + b)
                fm = float(np.polyval(coeffs, mid))
                if fm == 0.0 or (b - a) < tol * max(1.0, abs(mid)):
                    break
                if fa * fm < 0.0:
                    b = mid
                else:
                    a, fa = mid, fm
            roots.append(0.5 * (a + b))
    if ps[-1] == 0.0:
        roots.append(float(xs[-1]))
    if len(roots) != n:
        raise RuntimeError(f"isolated {len(roots)} of {n} roots; "
                           "matrix has (near-)repeated eigenvalues")
    return np.sort(np.array(roots))[::-1]


def normal_equation_fit(X, w):
    """Least squares via the literal normal equations (X^T X) b = X^T w."""
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return np.linalg.solve(X.T @ X, X.T @ w)


def fir_from_zeros(zeros, gain=1.0):
    """Real FIR taps with the given transfer-function zeros (z-plane).

    Complex zeros must come in conjugate pairs for a real result; used to
    build known minimum/maximum-phase test signals.
    """
    taps = np.atleast_1d(np.poly(np.asarray(zeros, dtype=np.complex128)))
    if np.abs(taps.imag).max() > 1e-12 * max(np.abs(taps).max(), 1.0):
        raise ValueError("zeros are not closed under conjugation")
    return gain * taps.real
