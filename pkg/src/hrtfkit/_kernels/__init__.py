"""Hot numerical kernels: compiled core with a pure-Python fallback.

Three inner loops dominate the pipeline's runtime: the radix-2 FFT
butterflies (run for every HRIR in an archive), the cyclic Jacobi sweeps
of the 128x128 covariance eigensolver, and the cross-correlation lag
scans used for onset-delay and ITD estimation.  Both backends implement
the same algorithms with the same operation order; the Cython extension
is compiled without FP contraction so the two agree to the last few ulp.

Selection happens once at import time.  The compiled module is preferred
when importable; set HRTFKIT_BACKEND=py or HRTFKIT_BACKEND=ext to force
a choice (forcing "ext" raises if the extension is unavailable).
"""

import os

import numpy as np

_choice = os.environ.get("HRTFKIT_BACKEND", "auto").strip().lower()
if _choice in ("", "auto"):
    _choice = "auto"
elif _choice not in ("ext", "py"):
    raise RuntimeError(f"HRTFKIT_BACKEND must be 'ext' or 'py', got {_choice!r}")

if _choice in ("auto", "ext"):
    try:
        from . import _ext as _impl
        BACKEND = "ext"
    except ImportError:
        if _choice == "ext":
            raise
        from . import _py as _impl
        BACKEND = "py"
else:
    from . import _py as _impl
    BACKEND = "py"

_TABLE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Bit-reversal permutation and forward twiddle table for size n.

    Shared by both backends so that twiddle values are identical
    regardless of which one runs.
    """
    cached = _TABLE_CACHE.get(n)
    if cached is not None:
        return cached
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    tw = np.exp(-2j * np.pi * np.arange(max(n // 2, 1), dtype=np.float64) / n)
    _TABLE_CACHE[n] = (rev, tw)
    return rev, tw


def fft_batch(a: np.ndarray) -> np.ndarray:
    """Forward DFT of each row of `a` via iterative radix-2 with bit reversal.

    `a` must be 2-D with a power-of-two number of columns.  Returns a new
    complex128 array; no normalization.
    """
    a = np.ascontiguousarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError("fft_batch expects a 2-D array")
    n = a.shape[1]
    if not is_power_of_two(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    if n == 1:
        return a.copy()
    rev, tw = _tables(n)
    return _impl.fft_kernel(a, rev, tw)


def ifft_batch(a: np.ndarray) -> np.ndarray:
    """Inverse DFT of each row, scaled by 1/n (conjugation trick)."""
    a = np.ascontiguousarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError("ifft_batch expects a 2-D array")
    n = a.shape[1]
    out = np.conj(fft_batch(np.conj(a)))
    out /= n
    return out


def jacobi_eigh(S: np.ndarray, max_sweeps: int = 100,
                tol_factor: float = 1e-12) -> tuple[np.ndarray, np.ndarray, int]:
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Sweeps row pairs in a fixed order until the off-diagonal Frobenius
    norm drops below ``tol_factor * ||S||_F`` or ``max_sweeps`` is hit.
    Returns (eigenvalues unsorted, eigenvector columns, sweeps used);
    raises RuntimeError when the cap is reached without convergence.
    """
    A = np.array(S, dtype=np.float64, order="C", copy=True)
    n = A.shape[0]
    V = np.eye(n, order="C")
    tol = tol_factor * np.sqrt(np.sum(A * A))
    sweeps = _impl.jacobi_kernel(A, V, tol, max_sweeps)
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    off_norm = float(np.sqrt(np.sum(off * off)))
    if off_norm > tol:
        raise RuntimeError(
            f"Jacobi eigensolver did not converge in {max_sweeps} sweeps "
            f"(off-diagonal norm {off_norm:.3e}, tolerance {tol:.3e})")
    return np.diag(A).copy(), V, sweeps


def xcorr_scan(a: np.ndarray, b: np.ndarray, lag_min: int, lag_max: int) -> np.ndarray:
    """Raw cross-correlation sums r(lag) = sum_n a[n+lag] * b[n].

    Evaluated for every integer lag in [lag_min, lag_max]; lags with no
    overlap yield 0.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("xcorr_scan expects 1-D arrays")
    if lag_max < lag_min:
        raise ValueError("lag_max must be >= lag_min")
    return _impl.xcorr_kernel(a, b, int(lag_min), int(lag_max))
