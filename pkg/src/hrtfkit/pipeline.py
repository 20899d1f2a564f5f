"""End-to-end orchestration: training, individualization, evaluation.

Training: archive HRIRs -> 256-point FFT -> first 128 magnitude bins ->
PCA (mean, basis, weights) -> per-cell regression of weights on the
eight selected measurements -> per-direction mean onset delays.

Individualization runs the reconstruction path: predicted weights ->
magnitude model -> minimum phase -> inverse transform -> mean delays.

Evaluation compares synthesized magnitude spectra against the archive's
originals, per (subject, ear, direction), using the squared-error
percentage metric and the spectral-distortion score.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import _kernels, dsp
from .dataset import TrainedModel
from .measurements import MEASUREMENT_LABELS
from .pca import clamp_positive, fit_pca
from .regression import (DEFAULT_FEATURE_INDICES, build_design_matrix,
                         fit_all, predict)

OUT_LENGTH = dsp.N_FFT  # synthesized HRIR length (superset of measured 200)


class PipelineError(RuntimeError):
    """Failure inside a named pipeline stage."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@contextmanager
def _stage(name):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc


def _pmap(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def magnitude_matrix(archive, n_fft=dsp.N_FFT):
    """Half-spectrum magnitudes of every archive HRIR.

    Returns (H, column_index): H is bins x observations with columns in
    subject-major (ear, direction) order, matching column_index.
    """
    if archive.hrir_length > n_fft:
        raise ValueError(f"hrir_length {archive.hrir_length} exceeds n_fft {n_fft}")
    flat = archive.data.reshape(-1, archive.hrir_length)
    padded = np.zeros((flat.shape[0], n_fft), dtype=np.complex128)
    padded[:, :archive.hrir_length] = flat
    mags = np.abs(_kernels.fft_batch(padded))[:, :n_fft // 2]
    column_index = tuple((s, e, d)
                         for s in archive.subjects
                         for e in (0, 1)
                         for d in range(archive.n_directions))
    return mags.T.copy(), column_index


def _mean_onset_delays(archive, threads):
    """Per-(ear, direction) average onset delay across subjects."""
    flat = archive.data.reshape(-1, archive.hrir_length)
    delays = np.array(_pmap(dsp.estimate_onset_delay, list(flat), threads),
                      dtype=np.float64)
    per_subject = delays.reshape(len(archive.subjects), 2, archive.n_directions)
    return per_subject.mean(axis=0)


def train(archive, table, q=10, feature_indices=DEFAULT_FEATURE_INDICES,
          standardize=False, provenance=None, threads=1):
    """Train a model on an archive and its aligned anthropometry table."""
    with _stage("alignment"):
        if tuple(table.subjects) != tuple(archive.subjects):
            raise ValueError("anthropometry subjects do not match the archive "
                             "(same ids, same order required)")
    with _stage("spectra"):
        H, column_index = magnitude_matrix(archive)
    with _stage("pca"):
        pca_model = fit_pca(H, q, column_index)
    with _stage("regression"):
        design = build_design_matrix(table, feature_indices, standardize=standardize)
        reg_model = fit_all(pca_model, design)
    with _stage("delays"):
        mean_delays = _mean_onset_delays(archive, threads)
    if provenance is None:
        provenance = (f"{len(archive.subjects)} subjects, "
                      f"{archive.n_directions} directions, q={q}, "
                      f"n_fft={dsp.N_FFT}, standardize={standardize}")
    return TrainedModel(pca=pca_model, regression=reg_model,
                        mean_delays=mean_delays,
                        feature_indices=tuple(int(i) for i in feature_indices),
                        sample_rate=archive.sample_rate,
                        directions=archive.directions,
                        subjects=archive.subjects,
                        provenance=provenance)


@dataclass(frozen=True, eq=False)
class IndividualizedHrirSet:
    """Synthesized left/right HRIRs per direction, delays applied."""
    sample_rate: float
    directions: tuple
    hrirs: np.ndarray        # (2, n_directions, out_length)
    magnitudes: np.ndarray   # (2, n_directions, n_bins) backing models
    delays_applied: np.ndarray  # (2, n_directions) samples actually inserted


def features_from_mapping(model, mapping):
    """Extract the model's 8 features by name from a mapping.

    Returns (vector, unknown_keys); missing or non-numeric entries raise.
    """
    labels = [MEASUREMENT_LABELS[i] for i in model.feature_indices]
    values = []
    for label in labels:
        if label not in mapping:
            raise ValueError(f"missing anthropometric feature {label!r} "
                             f"(required: {', '.join(labels)})")
        try:
            values.append(float(mapping[label]))
        except (TypeError, ValueError):
            raise ValueError(f"feature {label!r} is not a number: "
                             f"{mapping[label]!r}") from None
    unknown = sorted(set(mapping) - set(labels))
    return np.array(values), unknown


def individualize(model, anthro_features, out_length=OUT_LENGTH,
                  fractional_delay=False):
    """Synthesize a listener's HRIR set from their 8 measurements.

    anthro_features is either a mapping by measurement name or a sequence
    in the model's fixed feature order.
    """
    if isinstance(anthro_features, dict):
        feats, _ = features_from_mapping(model, anthro_features)
    else:
        feats = np.asarray(anthro_features, dtype=np.float64)
    with _stage("predict"):
        weights = predict(model.regression, feats)  # (2, D, q)
    with _stage("reconstruct"):
        flat_w = weights.reshape(-1, model.pca.q)
        mags = flat_w @ model.pca.basis.T + model.pca.mean
        mags, n_clamped = clamp_positive(mags)
        if n_clamped:
            warnings.warn(f"individualize: clamped {n_clamped} negative "
                          "magnitude bin(s)", dsp.MagnitudeFloorWarning,
                          stacklevel=2)
    with _stage("min-phase"):
        signals, _ = dsp.min_phase_signals(mags)
    with _stage("delays"):
        n_dir = len(model.directions)
        hrirs = np.empty((2 * n_dir, out_length))
        applied = np.empty(2 * n_dir)
        flat_delays = model.mean_delays.reshape(-1)
        for i in range(signals.shape[0]):
            delay = float(flat_delays[i])
            if not fractional_delay:
                delay = float(int(round(delay)))
            hrirs[i] = dsp.insert_delay(signals[i], delay, out_length,
                                        fractional=fractional_delay)
            applied[i] = delay
    return IndividualizedHrirSet(
        sample_rate=model.sample_rate, directions=model.directions,
        hrirs=hrirs.reshape(2, n_dir, out_length),
        magnitudes=mags.reshape(2, n_dir, -1),
        delays_applied=applied.reshape(2, n_dir))


def error_percent(original, estimated):
    """Squared-error percentage between magnitude spectra:
    100 * ||h - h_hat||^2 / ||h||^2."""
    original = np.asarray(original, dtype=np.float64)
    estimated = np.asarray(estimated, dtype=np.float64)
    if original.shape != estimated.shape:
        raise ValueError("magnitude spectra must have matching shapes")
    denom = float(np.dot(original, original))
    if denom == 0.0:
        raise ValueError("original magnitude spectrum has zero norm")
    diff = original - estimated
    return 100.0 * float(np.dot(diff, diff)) / denom


def sd_score(original, estimated, bin_spacing=None, band=None):
    """Spectral distortion in dB: RMS of (20 log10 h - 20 log10 h_hat)
    over the band's bins (full spectrum by default)."""
    rows = np.atleast_2d(np.asarray(original, dtype=np.float64))
    rows_hat = np.atleast_2d(np.asarray(estimated, dtype=np.float64))
    if rows.shape != rows_hat.shape:
        raise ValueError("magnitude spectra must have matching shapes")
    log_h, n1 = dsp._floored_log(rows)
    log_hat, n2 = dsp._floored_log(rows_hat)
    if n1 or n2:
        warnings.warn(f"sd_score: clamped {n1 + n2} magnitude bin(s)",
                      dsp.MagnitudeFloorWarning, stacklevel=2)
    from .features import _band_slice
    sel = _band_slice(rows.shape[1], bin_spacing, band)
    diff_db = (log_h[:, sel] - log_hat[:, sel]) * (20.0 / np.log(10.0))
    return float(np.sqrt(np.mean(diff_db[0] ** 2)))


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    """Per-cell errors plus aggregate views; cells are (subject, ear,
    direction)."""
    mode: str
    subjects: tuple[str, ...]
    directions: tuple
    error_percent: np.ndarray  # (S, 2, D)
    sd_db: np.ndarray          # (S, 2, D)

    def overall_mean_error(self):
        return float(self.error_percent.mean())

    def per_ear_mean_error(self):
        means = self.error_percent.mean(axis=(0, 2))
        return float(means[0]), float(means[1])

    def overall_mean_sd(self):
        return float(self.sd_db.mean())

    def per_subject_mean_error(self):
        return {sid: float(self.error_percent[i].mean())
                for i, sid in enumerate(self.subjects)}

    def summary(self):
        left, right = self.per_ear_mean_error()
        return {
            "mode": self.mode,
            "n_subjects": len(self.subjects),
            "n_directions": len(self.directions),
            "overall_mean_error_percent": self.overall_mean_error(),
            "left_ear_mean_error_percent": left,
            "right_ear_mean_error_percent": right,
            "overall_mean_sd_db": self.overall_mean_sd(),
        }

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "ear", "azimuth_deg", "hemisphere",
                        "error_percent", "sd_db"])
            for s, sid in enumerate(self.subjects):
                for e, ear in enumerate(("left", "right")):
                    for d, direction in enumerate(self.directions):
                        w.writerow([sid, ear, repr(direction.azimuth_deg),
                                    direction.hemisphere,
                                    repr(float(self.error_percent[s, e, d])),
                                    repr(float(self.sd_db[s, e, d]))])

    def curves_csv(self, path):
        """Per-azimuth mean error across subjects (plot-ready)."""
        import csv
        mean_err = self.error_percent.mean(axis=0)
        mean_sd = self.sd_db.mean(axis=0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ear", "azimuth_deg", "hemisphere",
                        "mean_error_percent", "mean_sd_db"])
            for e, ear in enumerate(("left", "right")):
                for d, direction in enumerate(self.directions):
                    w.writerow([ear, repr(direction.azimuth_deg),
                                direction.hemisphere,
                                repr(float(mean_err[e, d])),
                                repr(float(mean_sd[e, d]))])


def _check_archive_matches(model, archive):
    if archive.directions != model.directions:
        raise ValueError("archive directions do not match the model")
    if archive.sample_rate != model.sample_rate:
        raise ValueError(f"archive sample rate {archive.sample_rate} does not "
                         f"match the model's {model.sample_rate}")


def _subject_features(model, table, sid):
    idx = table.subject_index(sid)
    feats = table.values[idx, list(model.feature_indices)]
    if not np.all(np.isfinite(feats)):
        j = int(np.argmax(~np.isfinite(feats)))
        label = MEASUREMENT_LABELS[model.feature_indices[j]]
        raise ValueError(f"subject {sid!r} is missing measurement {label!r}")
    return feats


def _pca_mode_cells(model, mags):
    """Reconstruct-then-compare for every spectrum: h_hat = V V^T (h - mu) + mu."""
    V = model.pca.basis
    mu = model.pca.mean
    centered = mags - mu
    recon = (centered @ V) @ V.T + mu
    recon, _ = clamp_positive(recon)
    return recon


def evaluate(model, archive, table=None, mode="individualized", threads=1,
             holdout=False, train_kwargs=None):
    """Per-cell comparison of modeled vs measured magnitude spectra.

    mode "pca": project-and-reconstruct with the model's basis (no
    regression involved).  mode "individualized": synthesize each subject
    from their own measurements and compare.  holdout (individualized
    only) retrains without the evaluated subject each time; an extension
    beyond the published procedure, off by default.
    """
    if mode not in ("pca", "individualized"):
        raise ValueError(f"mode must be 'pca' or 'individualized', got {mode!r}")
    _check_archive_matches(model, archive)
    with _stage("spectra"):
        H, _ = magnitude_matrix(archive)
    S = len(archive.subjects)
    D = archive.n_directions
    mags = H.T.reshape(S, 2, D, -1)

    if mode == "pca":
        flat = mags.reshape(-1, mags.shape[-1])
        recon = _pca_mode_cells(model, flat).reshape(mags.shape)
    else:
        if holdout:
            recon = _holdout_reconstructions(model, archive, table, threads,
                                             train_kwargs or {})
        else:
            if table is None:
                raise ValueError("individualized evaluation needs an "
                                 "anthropometry table")

            def synth(sid):
                feats = _subject_features(model, table, sid)
                return individualize(model, feats).magnitudes

            recon = np.stack(_pmap(synth, archive.subjects, threads))

    errors = np.empty((S, 2, D))
    sds = np.empty((S, 2, D))
    for s in range(S):
        for e in range(2):
            for d in range(D):
                errors[s, e, d] = error_percent(mags[s, e, d], recon[s, e, d])
                sds[s, e, d] = sd_score(mags[s, e, d], recon[s, e, d])
    return EvaluationReport(mode=mode, subjects=archive.subjects,
                            directions=archive.directions,
                            error_percent=errors, sd_db=sds)


def _holdout_reconstructions(model, archive, table, threads, train_kwargs):
    """Leave-one-subject-out: retrain without each subject, then
    individualize them from the held-out model."""
    if table is None:
        raise ValueError("holdout evaluation needs an anthropometry table")
    if tuple(table.subjects) != tuple(archive.subjects):
        raise ValueError("holdout evaluation needs the table aligned with "
                         "the archive (same ids, same order)")
    from .dataset import AnthropometryTable, HrirArchive, validate_archive

    q = model.pca.q
    feature_indices = model.feature_indices

    def one(s):
        keep = [i for i in range(len(archive.subjects)) if i != s]
        sub_archive = validate_archive(HrirArchive(
            sample_rate=archive.sample_rate, hrir_length=archive.hrir_length,
            subjects=tuple(archive.subjects[i] for i in keep),
            directions=archive.directions, data=archive.data[keep]))
        sub_table = AnthropometryTable(
            subjects=tuple(table.subjects[i] for i in keep),
            values=table.values[keep])
        fold = train(sub_archive, sub_table, q=q,
                     feature_indices=feature_indices, **train_kwargs)
        feats = _subject_features(model, table, archive.subjects[s])
        return individualize(fold, feats).magnitudes

    return np.stack(_pmap(one, list(range(len(archive.subjects))), threads))
