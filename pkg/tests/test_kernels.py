"""Backend selection and compiled-vs-fallback parity."""

import numpy as np
import pytest

from hrtfkit import _kernels
from hrtfkit._kernels import _py, _tables, fft_batch, ifft_batch, jacobi_eigh, xcorr_scan
from hrtfkit.testkit import naive_dft

try:
    from hrtfkit._kernels import _ext
except ImportError:
    _ext = None

needs_ext = pytest.mark.skipif(_ext is None, reason="compiled kernels not built")


def test_backend_is_reported():
    assert _kernels.BACKEND in ("ext", "py")


def test_fft_batch_matches_naive_dft():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(8, 128)) + 1j * rng.normal(size=(8, 128))
    got = fft_batch(x)
    want = np.stack([naive_dft(row) for row in x])
    assert np.abs(got - want).max() < 1e-10


def test_ifft_batch_inverts():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(4, 64)) + 1j * rng.normal(size=(4, 64))
    assert np.abs(ifft_batch(fft_batch(x)) - x).max() < 1e-12


def test_fft_batch_rejects_non_power_of_two():
    with pytest.raises(ValueError, match="power of two"):
        fft_batch(np.zeros((1, 100), dtype=np.complex128))


def test_jacobi_diagonalizes():
    rng = np.random.default_rng(13)
    A = rng.normal(size=(24, 24))
    S = (A + A.T) / 2
    values, vectors, sweeps = jacobi_eigh(S)
    assert sweeps < 100
    assert np.abs(vectors.T @ vectors - np.eye(24)).max() < 1e-12
    assert np.abs(S @ vectors - vectors * values).max() < 1e-10


def test_jacobi_leaves_diagonal_input_untouched():
    values, vectors, sweeps = jacobi_eigh(np.diag([4.0, 2.0, 1.0]))
    assert sweeps == 0
    assert np.array_equal(np.sort(values), [1.0, 2.0, 4.0])
    assert np.array_equal(vectors, np.eye(3))


def test_xcorr_scan_matches_direct_sums():
    rng = np.random.default_rng(14)
    a = rng.normal(size=37)
    b = rng.normal(size=21)
    got = xcorr_scan(a, b, -(len(b) - 1), len(a) - 1)
    for i, lag in enumerate(range(-(len(b) - 1), len(a))):
        direct = sum(a[n + lag] * b[n] for n in range(len(b))
                     if 0 <= n + lag < len(a))
        assert got[i] == pytest.approx(direct, abs=1e-12)


@needs_ext
def test_fft_parity_between_backends():
    rng = np.random.default_rng(15)
    x = rng.normal(size=(20, 256)) + 1j * rng.normal(size=(20, 256))
    rev, tw = _tables(256)
    a = _py.fft_kernel(np.ascontiguousarray(x), rev, tw)
    b = _ext.fft_kernel(np.ascontiguousarray(x), rev, tw)
    assert np.abs(a - b).max() < 1e-12


@needs_ext
def test_jacobi_parity_between_backends():
    rng = np.random.default_rng(16)
    A = rng.normal(size=(48, 48))
    S = (A + A.T) / 2
    tol = 1e-12 * float(np.sqrt((S * S).sum()))
    A1, V1 = S.copy(), np.eye(48)
    A2, V2 = np.ascontiguousarray(S.copy()), np.ascontiguousarray(np.eye(48))
    s1 = _py.jacobi_kernel(A1, V1, tol, 100)
    s2 = _ext.jacobi_kernel(A2, V2, tol, 100)
    assert s1 == s2
    assert np.abs(np.diag(A1) - np.diag(A2)).max() < 1e-10
    assert np.abs(V1 - V2).max() < 1e-10


@needs_ext
def test_xcorr_parity_between_backends():
    rng = np.random.default_rng(17)
    a = rng.normal(size=300)
    b = rng.normal(size=280)
    r1 = _py.xcorr_kernel(a, b, -279, 299)
    r2 = _ext.xcorr_kernel(a, b, -279, 299)
    scale = np.abs(r1).max()
    assert np.abs(r1 - r2).max() < 1e-9 * scale
