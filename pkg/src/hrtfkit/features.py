"""Psychoacoustic summary parameters and their anthropometry correlations.

Per subject: the maximum interaural time difference over the horizontal
plane (from cross-correlation of left/right HRIRs), the maximum
interaural level difference over frequency and direction, and the pinna
notch frequency (deepest local minimum of the log-magnitude spectrum in
a configurable band).  The correlation report tabulates Pearson's rho
between each of the 27 measurements and each summary; the eight
measurements driving individualization are flagged, not re-derived.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import dsp
from .measurements import MEASUREMENT_LABELS, MEASUREMENT_UNITS
from .regression import DEFAULT_FEATURE_INDICES

DEFAULT_NOTCH_BAND = (4000.0, 16000.0)  # classic pinna-notch region


def itd(left, right, sample_rate):
    """Interaural time difference in seconds (signed, lag convention of
    dsp.cross_correlation_lag: negative when the right ear lags)."""
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    return dsp.cross_correlation_lag(left, right) / float(sample_rate)


def itd_max(left_hrirs, right_hrirs, sample_rate):
    """Maximum |ITD| across a subject's full horizontal direction set."""
    left_hrirs = np.asarray(left_hrirs, dtype=np.float64)
    right_hrirs = np.asarray(right_hrirs, dtype=np.float64)
    if left_hrirs.ndim != 2 or left_hrirs.shape != right_hrirs.shape:
        raise ValueError("left/right HRIR sets must be matching (directions, "
                         f"samples) arrays, got {left_hrirs.shape} and {right_hrirs.shape}")
    if left_hrirs.shape[0] == 0:
        raise ValueError("direction set is empty")
    return max(abs(itd(l, r, sample_rate))
               for l, r in zip(left_hrirs, right_hrirs))


def _floored_db(mags, where):
    rows = np.atleast_2d(np.asarray(mags, dtype=np.float64))
    logs, clamped = dsp._floored_log(rows)
    if clamped:
        warnings.warn(f"{where}: clamped {clamped} magnitude bin(s) to the log floor",
                      dsp.MagnitudeFloorWarning, stacklevel=3)
    return logs * (20.0 / np.log(10.0))


def _band_slice(n_bins, bin_spacing, band):
    if band is None:
        return slice(0, n_bins)
    lo, hi = band
    if not (0 <= lo < hi):
        raise ValueError(f"invalid frequency band {band}")
    if bin_spacing is None or bin_spacing <= 0:
        raise ValueError("bin_spacing (Hz) is required when a band is given")
    k_lo = int(np.ceil(lo / bin_spacing))
    k_hi = int(np.floor(hi / bin_spacing))
    return slice(max(k_lo, 0), min(k_hi + 1, n_bins))


def ild_max(left_mags, right_mags, bin_spacing=None, band=None):
    """Maximum |ILD| in dB over directions and the frequency band.

    Inputs are (directions, bins) magnitude arrays; ILD(k, direction) =
    20 log10(|L| / |R|) with the usual positive floor applied first.
    """
    left_db = _floored_db(left_mags, "ild_max")
    right_db = _floored_db(right_mags, "ild_max")
    if left_db.shape != right_db.shape:
        raise ValueError("left/right magnitude sets must have matching shapes")
    sel = _band_slice(left_db.shape[1], bin_spacing, band)
    return float(np.max(np.abs(left_db[:, sel] - right_db[:, sel])))


def pinna_notch_frequency(mag, bin_spacing, band=DEFAULT_NOTCH_BAND):
    """Frequency (Hz) of the deepest local log-magnitude minimum in band.

    A local minimum needs both neighbors strictly larger; depth ties go to
    the lowest frequency.  Returns None when the band holds no local
    minimum (flat or monotone spectra).
    """
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 1 or mag.size < 3:
        raise ValueError("mag must be a 1-D spectrum with at least 3 bins")
    if bin_spacing is None or bin_spacing <= 0:
        raise ValueError("bin_spacing must be positive")
    db = _floored_db(mag, "pinna_notch_frequency")[0]
    sel = _band_slice(mag.size, bin_spacing, band)
    best_k = None
    best_depth = np.inf
    for k in range(max(sel.start, 1), min(sel.stop, mag.size - 1)):
        if db[k] < db[k - 1] and db[k] < db[k + 1] and db[k] < best_depth:
            best_depth = db[k]
            best_k = k
    return None if best_k is None else best_k * bin_spacing


def pearson(a, b):
    """Sample Pearson correlation coefficient."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("pearson needs two equal-length vectors of size >= 2")
    da = a - a.mean()
    db = b - b.mean()
    va = float(np.dot(da, da))
    vb = float(np.dot(db, db))
    if va == 0.0 or vb == 0.0:
        raise ValueError("pearson is undefined for zero-variance input")
    return float(np.dot(da, db) / np.sqrt(va * vb))


@dataclass(frozen=True)
class SubjectSummary:
    subject: str
    itd_max_s: float
    ild_max_db: float
    f_pn_hz: float | None


def _default_notch_direction(directions):
    """Most ipsilateral front direction (lowest azimuth); falls back to the
    first direction for archives without a front hemisphere."""
    front = [i for i, d in enumerate(directions) if d.hemisphere == "front"]
    if not front:
        return 0
    return min(front, key=lambda i: directions[i].azimuth_deg)


def subject_summaries(archive, notch_ear=0, notch_direction=None,
                      notch_band=DEFAULT_NOTCH_BAND, ild_band=None,
                      n_fft=dsp.N_FFT):
    """ITD_max / ILD_max / f_pn for every archive subject.

    The notch is read off one (ear, direction) magnitude spectrum; by
    default the left ear at the most ipsilateral front azimuth.
    """
    if notch_direction is None:
        notch_direction = _default_notch_direction(archive.directions)
    bin_spacing = archive.sample_rate / n_fft
    out = []
    for s, sid in enumerate(archive.subjects):
        left = archive.data[s, 0]
        right = archive.data[s, 1]
        mags = _half_magnitudes(archive.data[s].reshape(-1, archive.hrir_length), n_fft)
        mags = mags.reshape(2, archive.n_directions, -1)
        out.append(SubjectSummary(
            subject=sid,
            itd_max_s=itd_max(left, right, archive.sample_rate),
            ild_max_db=ild_max(mags[0], mags[1], bin_spacing=bin_spacing,
                               band=ild_band),
            f_pn_hz=pinna_notch_frequency(mags[notch_ear, notch_direction],
                                          bin_spacing, band=notch_band)))
    return out


def _half_magnitudes(signals, n_fft):
    from . import _kernels
    padded = np.zeros((signals.shape[0], n_fft), dtype=np.complex128)
    padded[:, :signals.shape[1]] = signals
    return np.abs(_kernels.fft_batch(padded))[:, :n_fft // 2]


@dataclass(frozen=True)
class CorrelationEntry:
    rho: float | None
    note: str = ""


@dataclass(frozen=True)
class CorrelationRow:
    measurement: str
    unit: str
    chosen: bool
    itd_max: CorrelationEntry
    ild_max: CorrelationEntry
    f_pn: CorrelationEntry


@dataclass(frozen=True)
class CorrelationReport:
    rows: tuple[CorrelationRow, ...]
    summaries: tuple[SubjectSummary, ...]
    notch_ear: int
    notch_direction: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["measurement", "unit", "chosen",
                        "rho_itd_max", "rho_ild_max", "rho_f_pn", "notes"])
            for row in self.rows:
                entries = [row.itd_max, row.ild_max, row.f_pn]
                notes = "; ".join(f"{name}: {e.note}" for name, e in
                                  zip(("itd_max", "ild_max", "f_pn"), entries)
                                  if e.note)
                w.writerow([row.measurement, row.unit, int(row.chosen)]
                           + ["" if e.rho is None else repr(e.rho) for e in entries]
                           + [notes])

    def format_text(self):
        lines = [f"{'measurement':>11}  {'rho(ITD_max)':>12}  "
                 f"{'rho(ILD_max)':>12}  {'rho(f_pn)':>12}  chosen"]
        for row in self.rows:
            cells = []
            for e in (row.itd_max, row.ild_max, row.f_pn):
                cells.append(f"{e.rho:12.3f}" if e.rho is not None
                             else f"{e.note or 'n/a':>12}")
            mark = "  *" if row.chosen else ""
            lines.append(f"{row.measurement:>11}  " + "  ".join(cells) + mark)
        return "\n".join(lines)


def _correlate_column(column, stats):
    finite = np.isfinite(column) & np.isfinite(stats)
    if int(finite.sum()) < 2:
        return CorrelationEntry(None, "insufficient data")
    try:
        return CorrelationEntry(pearson(column[finite], stats[finite]))
    except ValueError:
        return CorrelationEntry(None, "zero variance")


def correlation_report(archive, table, chosen_indices=DEFAULT_FEATURE_INDICES,
                       **summary_kwargs):
    """Pearson correlations of all 27 measurements against the summaries."""
    if table.subjects != archive.subjects:
        raise ValueError("anthropometry table subjects do not match the archive")
    summaries = subject_summaries(archive, **summary_kwargs)
    itd_stats = np.array([s.itd_max_s for s in summaries])
    ild_stats = np.array([s.ild_max_db for s in summaries])
    fpn_stats = np.array([np.nan if s.f_pn_hz is None else s.f_pn_hz
                          for s in summaries])
    chosen = set(chosen_indices)
    rows = []
    for j, (label, unit) in enumerate(zip(MEASUREMENT_LABELS, MEASUREMENT_UNITS)):
        col = table.values[:, j]
        rows.append(CorrelationRow(
            measurement=label, unit=unit, chosen=j in chosen,
            itd_max=_correlate_column(col, itd_stats),
            ild_max=_correlate_column(col, ild_stats),
            f_pn=_correlate_column(col, fpn_stats)))
    notch_dir = summary_kwargs.get("notch_direction")
    if notch_dir is None:
        notch_dir = _default_notch_direction(archive.directions)
    return CorrelationReport(rows=tuple(rows), summaries=tuple(summaries),
                             notch_ear=summary_kwargs.get("notch_ear", 0),
                             notch_direction=notch_dir)
