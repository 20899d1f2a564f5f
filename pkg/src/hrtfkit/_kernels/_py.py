"""Pure-Python (numpy) kernel backend.

Mirrors hrtfkit._kernels._ext loop for loop: same butterfly structure,
same rotation formulas, same evaluation order per element.  Kept free of
scipy/np.fft on purpose so the production FFT path is this code (or its
compiled twin), never a library transform.
"""

import numpy as np


def fft_kernel(a: np.ndarray, rev: np.ndarray, tw: np.ndarray) -> np.ndarray:
    out = a[:, rev]
    n = out.shape[1]
    size = 2
    while size <= n:
        half = size // 2
        stride = n // size
        w = tw[::stride][:half]
        blocks = out.reshape(out.shape[0], -1, size)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * w
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return out


def _off_norm(A: np.ndarray) -> float:
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.sqrt(np.sum(off * off)))


def jacobi_kernel(A: np.ndarray, V: np.ndarray, tol: float, max_sweeps: int) -> int:
    n = A.shape[0]
    for sweep in range(max_sweeps):
        if _off_norm(A) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- (A J) then J^T (A J); V <- V J
                colp = c * A[:, p] - s * A[:, q]
                colq = s * A[:, p] + c * A[:, q]
                A[:, p] = colp
                A[:, q] = colq
                rowp = c * A[p, :] - s * A[q, :]
                rowq = s * A[p, :] + c * A[q, :]
                A[p, :] = rowp
                A[q, :] = rowq
                vcolp = c * V[:, p] - s * V[:, q]
                vcolq = s * V[:, p] + c * V[:, q]
                V[:, p] = vcolp
                V[:, q] = vcolq
    return max_sweeps


def xcorr_kernel(a: np.ndarray, b: np.ndarray, lag_min: int, lag_max: int) -> np.ndarray:
    la = a.shape[0]
    lb = b.shape[0]
    out = np.zeros(lag_max - lag_min + 1)
    for i, lag in enumerate(range(lag_min, lag_max + 1)):
        n_lo = max(0, -lag)
        n_hi = min(lb, la - lag)
        if n_hi > n_lo:
            out[i] = float(np.dot(a[n_lo + lag:n_hi + lag], b[n_lo:n_hi]))
    return out
