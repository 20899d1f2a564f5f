"""Signal-processing kernels for HRIR work.

Everything here operates on plain 1-D float64 arrays (signals) and their
spectra.  The transform path is the package's own radix-2 FFT (see
hrtfkit._kernels); the minimum-phase machinery uses the real-cepstrum
construction:

    v   = Re{IDFT{ln |DFT{h}|}}              (real cepstrum)
    w   = causal-fold window (1, 2, 2, ..., 2, 1, 0, ..., 0)
    hmp = Re{IDFT{exp(DFT{w * v})}}          (minimum-phase signal)

which preserves the magnitude spectrum exactly (to roundoff) and folds
all log-spectral content into the causal part, so the result dominates
every equal-magnitude signal in partial energy.
"""

import warnings

import numpy as np

from . import _kernels

N_FFT = 256          # pipeline transform size
N_BINS = N_FFT // 2  # retained magnitude bins (symmetry of real-signal spectra)
MAG_FLOOR_RATIO = 1e-10  # log-magnitude floor, relative to the peak bin


class MagnitudeFloorWarning(UserWarning):
    """A magnitude bin fell below the log floor and was clamped."""


def _as_signal(x, name="signal"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    return x


def fft(signal, n_fft):
    """Forward FFT of a real signal, zero-padded to n_fft (power of two)."""
    signal = _as_signal(signal)
    if not _kernels.is_power_of_two(n_fft):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    if n_fft < signal.size:
        raise ValueError(f"n_fft={n_fft} shorter than signal ({signal.size} samples)")
    padded = np.zeros(n_fft, dtype=np.complex128)
    padded[:signal.size] = signal
    return _kernels.fft_batch(padded[None, :])[0]

def ifft(spectrum):
    """Inverse FFT (complex result; take .real for a real signal)."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    if spectrum.ndim != 1:
        raise ValueError("spectrum must be 1-D")
    if not _kernels.is_power_of_two(spectrum.size):
        raise ValueError(f"spectrum length must be a power of two, got {spectrum.size}")
    return _kernels.ifft_batch(spectrum[None, :])[0]


def magnitude_half(spectrum):
    """|bins[0 .. N/2-1]| of a full complex spectrum (first half only)."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    if spectrum.size % 2 != 0:
        raise ValueError("spectrum length must be even")
    return np.abs(spectrum[:spectrum.size // 2])


def mirror_half_spectrum(mag_half):
    """Rebuild a full even-symmetric magnitude spectrum from its first half.

    The Nyquist bin is not represented in the half spectrum.  A real
    signal's magnitude spectrum is an even function of bin index about
    Nyquist, so the missing bin is extrapolated with an even polynomial
    in (distance to Nyquist) through the last three bins, clamped
    non-negative; smooth spectra are reconstructed to well below the
    downstream tolerances.
    """
    mag_half = np.asarray(mag_half, dtype=np.float64)
    return _mirror_batch(mag_half[None, :])[0]


def _mirror_batch(mags):
    n_half = mags.shape[1]
    full = np.empty((mags.shape[0], 2 * n_half))
    full[:, :n_half] = mags
    if n_half >= 4:
        # even polynomial in the distance x to Nyquist through x = 1..4,
        # evaluated at x = 0 (exact for even polynomials up to degree 6);
        # difference form keeps constant spectra exactly constant
        d1 = mags[:, -1] - mags[:, -2]
        d2 = mags[:, -2] - mags[:, -3]
        d3 = mags[:, -3] - mags[:, -4]
        nyquist = mags[:, -1] + 0.6 * d1 - 0.2 * d2 + (1.0 / 35.0) * d3
        full[:, n_half] = np.maximum(nyquist, 0.0)
    elif n_half == 3:
        d1 = mags[:, -1] - mags[:, -2]
        d2 = mags[:, -2] - mags[:, -3]
        full[:, n_half] = np.maximum(mags[:, -1] + 0.5 * d1 - 0.1 * d2, 0.0)
    elif n_half == 2:
        d1 = mags[:, -1] - mags[:, -2]
        full[:, n_half] = np.maximum(mags[:, -1] + d1 / 3.0, 0.0)
    else:
        full[:, n_half] = mags[:, -1]
    full[:, n_half + 1:] = mags[:, n_half - 1:0:-1]
    return full


def _floored_log(mags):
    """Elementwise ln of magnitude rows, clamped at MAG_FLOOR_RATIO * peak.

    Returns (log rows, number of clamped bins).  Raises if a row has no
    positive bin at all (log-magnitude undefined).
    """
    peaks = mags.max(axis=1)
    if np.any(peaks <= 0.0):
        raise ValueError("magnitude spectrum has no positive bin")
    floors = MAG_FLOOR_RATIO * peaks
    clamped = int(np.sum(mags < floors[:, None]))
    return np.log(np.maximum(mags, floors[:, None])), clamped


def _warn_clamped(n, where):
    if n:
        warnings.warn(f"{where}: clamped {n} magnitude bin(s) to the log floor",
                      MagnitudeFloorWarning, stacklevel=3)


def cepstral_window(n_fft):
    """Causal-fold weights: w[0] = w[N/2] = 1, w[n] = 2 for 0 < n < N/2, else 0."""
    w = np.zeros(n_fft)
    w[0] = 1.0
    w[1:n_fft // 2] = 2.0
    w[n_fft // 2] = 1.0
    return w


def real_cepstrum(h, n_fft):
    """Real cepstrum Re{IDFT{ln |DFT{h}|}} of a signal, length n_fft."""
    spec = fft(h, n_fft)
    logmag, clamped = _floored_log(np.abs(spec)[None, :])
    _warn_clamped(clamped, "real_cepstrum")
    return _kernels.ifft_batch(logmag.astype(np.complex128))[0].real


def _min_phase_from_full_mag(mags_full):
    """Minimum-phase rows from full magnitude rows: (signals, log spectra)."""
    logmag, clamped = _floored_log(mags_full)
    ceps = _kernels.ifft_batch(logmag.astype(np.complex128)).real
    folded = ceps * cepstral_window(mags_full.shape[1])
    logspec = _kernels.fft_batch(folded.astype(np.complex128))
    signals = _kernels.ifft_batch(np.exp(logspec)).real
    return signals, logspec, clamped


def minimum_phase_reconstruct(h, n_fft):
    """Minimum-phase counterpart of h: same magnitude spectrum, energy
    packed maximally toward n = 0 (any initial delay removed)."""
    spec = fft(h, n_fft)
    signals, _, clamped = _min_phase_from_full_mag(np.abs(spec)[None, :])
    _warn_clamped(clamped, "minimum_phase_reconstruct")
    return signals[0]


def hilbert_min_phase(mag_half):
    """Minimum phase (radians, full FFT length) for a half magnitude spectrum.

    Cepstral route for the Hilbert-transform relation between log
    magnitude and phase: the half spectrum is mirrored to full length and
    the phase is Im{DFT{w * IDFT{ln mag}}}.  Depends on the magnitude
    only, so equal-magnitude inputs give identical output.
    """
    mag_half = np.asarray(mag_half, dtype=np.float64)
    if mag_half.ndim != 1 or mag_half.size < 1:
        raise ValueError("mag_half must be a non-empty 1-D array")
    phases, clamped = _hilbert_min_phase_batch(mag_half[None, :])
    _warn_clamped(clamped, "hilbert_min_phase")
    return phases[0]


def _hilbert_min_phase_batch(mags_half):
    full = _mirror_batch(mags_half)
    _, logspec, clamped = _min_phase_from_full_mag(full)
    return logspec.imag, clamped


def min_phase_signals(mags_half):
    """Batched synthesis: half magnitude rows -> real minimum-phase signals.

    Mirrors each row, attaches the minimum phase, and inverse-transforms;
    row i of the result has |DFT| equal to the mirrored row i.  Returns
    (signals (m, 2*n_half), clamped bin count).
    """
    mags_half = np.asarray(mags_half, dtype=np.float64)
    full = _mirror_batch(mags_half)
    phases, clamped = _hilbert_min_phase_batch(mags_half)
    spectra = full * np.exp(1j * phases)
    return _kernels.ifft_batch(spectra).real, clamped


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


def _argmax_smallest_lag(values, lags):
    """Index of the maximum; exact ties resolved toward the smallest |lag|
    (and the more negative lag between +/-k)."""
    best = np.max(values)
    ties = np.flatnonzero(values == best)
    order = sorted(ties, key=lambda i: (abs(lags[i]), lags[i]))
    return order[0]


def cross_correlation_lag(a, b):
    """Signed lag maximizing r(lag) = sum_n a[n+lag] * b[n].

    Positive lag means b leads a (b's content occurs earlier); a copy of
    `a` delayed by d samples relative to b yields +d, and b delayed
    relative to a yields -d.  Exact ties resolve toward the smallest |lag|.
    """
    a = _as_signal(a, "a")
    b = _as_signal(b, "b")
    if not np.any(a) or not np.any(b):
        raise ValueError("cross-correlation of an all-zero signal is undefined")
    lag_min = -(b.size - 1)
    lag_max = a.size - 1
    r = _kernels.xcorr_scan(a, b, lag_min, lag_max)
    lags = np.arange(lag_min, lag_max + 1)
    return int(lags[_argmax_smallest_lag(r, lags)])


def estimate_onset_delay(h):
    """Onset delay of h in samples: the lag in [0, len(h)) at which h best
    matches its own minimum-phase reconstruction.

    Pure integer-sample delays are recovered exactly.  Uses a transform
    size of at least twice the signal length to keep the cepstrum of the
    reconstruction free of wrap-around.
    """
    h = _as_signal(h, "h")
    if not np.any(h):
        raise ValueError("cannot estimate the onset delay of an all-zero signal")
    n_fft = _next_pow2(2 * h.size)
    h_mp = minimum_phase_reconstruct(h, n_fft)
    r = _kernels.xcorr_scan(h, h_mp, 0, h.size - 1)
    lags = np.arange(h.size)
    return int(lags[_argmax_smallest_lag(r, lags)])


def _sinc_fractional_kernel(frac, half_width=16):
    n = np.arange(-half_width, half_width + 1)
    x = n - frac
    taps = np.sinc(x)
    taps *= np.hanning(2 * half_width + 1 + 2)[1:-1]  # nonzero end weights
    return taps


def insert_delay(h_mp, delay, out_length, fractional=False):
    """Delay a (minimum-phase) signal and fit it into out_length samples.

    Default behavior rounds the delay to the nearest integer sample and
    shifts; with fractional=True the integer part shifts and the
    remainder is applied by a truncated windowed-sinc interpolator.
    Content pushed beyond out_length is truncated.
    """
    h_mp = _as_signal(h_mp, "h_mp")
    if delay < 0:
        raise ValueError(f"delay must be >= 0, got {delay}")
    if out_length < 1:
        raise ValueError("out_length must be >= 1")
    out = np.zeros(out_length)
    if fractional:
        d_int = int(np.floor(delay))
        frac = float(delay) - d_int
        if frac > 0.0:
            shifted = np.convolve(h_mp, _sinc_fractional_kernel(frac))
            # kernel center sits at index half_width: compensate
            lead = (shifted.size - np.convolve(h_mp, [1.0]).size) // 2
            shifted = shifted[lead:]
        else:
            shifted = h_mp
    else:
        d_int = int(round(float(delay)))
        shifted = h_mp
    n = min(out_length - d_int, shifted.size)
    if n > 0:
        out[d_int:d_int + n] = shifted[:n]
    return out
