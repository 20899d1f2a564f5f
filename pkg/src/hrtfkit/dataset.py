"""On-disk formats and loaders: HRIR archives, anthropometry, trained models.

Archive layout (a directory):
    manifest.json            sample rate, HRIR length, subject ids,
                             direction table [{azimuth_deg, hemisphere}]
    subject_<id>.f64le       float64 little-endian, [ear][direction][sample]
                             row-major, ear 0 = left, 1 = right

Anthropometry is CSV: header row ``subject,x1..x17,d1..d8,t1,t2``, a
units row, then one row per subject; missing values are spelled ``nan``.

Model files carry the magic ``HRTFMDL1``, a JSON header, and the numeric
payload as concatenated float64 little-endian arrays in fixed order
(mean, basis, eigenvalues, weights, regression coefficients, mean
delays).  All loads validate; all saves round-trip bit-exactly.
"""

import json
import math
import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measurements import MEASUREMENT_LABELS, MEASUREMENT_UNITS, N_MEASUREMENTS
from .pca import PcaModel
from .regression import FEATURE_LABELS, RegressionModel

ARCHIVE_MANIFEST = "manifest.json"
MODEL_MAGIC = b"HRTFMDL1"
HEMISPHERES = ("front", "rear")

_SUBJECT_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


class FormatError(ValueError):
    """A file does not conform to one of the package formats."""


@dataclass(frozen=True)
class Direction:
    """Horizontal-plane direction: signed azimuth plus hemisphere flag
    (front = elevation 0 degrees, rear = elevation 180)."""
    azimuth_deg: float
    hemisphere: str


@dataclass(frozen=True, eq=False)
class HrirArchive:
    sample_rate: float
    hrir_length: int
    subjects: tuple[str, ...]
    directions: tuple[Direction, ...]
    data: np.ndarray  # (subjects, 2, directions, samples)

    @property
    def n_directions(self):
        return len(self.directions)

    def subject_index(self, subject_id):
        try:
            return self.subjects.index(subject_id)
        except ValueError:
            raise KeyError(f"unknown subject {subject_id!r}") from None


@dataclass(frozen=True, eq=False)
class AnthropometryTable:
    subjects: tuple[str, ...]
    values: np.ndarray  # (subjects, 27), NaN marks a missing measurement

    def missing_mask(self):
        return ~np.isfinite(self.values)

    def subject_index(self, subject_id):
        try:
            return self.subjects.index(subject_id)
        except ValueError:
            raise KeyError(f"unknown subject {subject_id!r}") from None


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Everything needed to synthesize HRIRs for a new listener."""
    pca: PcaModel
    regression: RegressionModel
    mean_delays: np.ndarray            # (2, n_directions), samples
    feature_indices: tuple[int, ...]
    sample_rate: float
    directions: tuple[Direction, ...]
    subjects: tuple[str, ...]          # training subjects
    provenance: str


def _check_subject_id(subject_id):
    if not _SUBJECT_ID_RE.match(subject_id):
        raise FormatError(f"subject id {subject_id!r} is not filesystem-safe "
                          "(use letters, digits, '_' or '-')")


def _check_directions(directions):
    seen = set()
    for d in directions:
        if d.hemisphere not in HEMISPHERES:
            raise FormatError(f"hemisphere must be one of {HEMISPHERES}, "
                              f"got {d.hemisphere!r}")
        if not math.isfinite(d.azimuth_deg):
            raise FormatError("direction azimuth must be finite")
        key = (d.azimuth_deg, d.hemisphere)
        if key in seen:
            raise FormatError(f"duplicate direction {key}")
        seen.add(key)
    # canonical order: front block then rear block, azimuth ascending
    rank = [(HEMISPHERES.index(d.hemisphere), d.azimuth_deg) for d in directions]
    if any(a >= b for a, b in zip(rank, rank[1:])):
        raise FormatError("directions must be strictly ordered: front hemisphere "
                          "first, azimuth ascending within each hemisphere")


def validate_archive(archive):
    """Check every archive invariant; raises FormatError on violation."""
    if not (math.isfinite(archive.sample_rate) and archive.sample_rate > 0):
        raise FormatError(f"sample_rate must be positive, got {archive.sample_rate}")
    if archive.hrir_length < 1:
        raise FormatError("hrir_length must be >= 1")
    if not archive.subjects:
        raise FormatError("archive needs at least one subject")
    if len(set(archive.subjects)) != len(archive.subjects):
        raise FormatError("duplicate subject ids")
    for sid in archive.subjects:
        _check_subject_id(sid)
    if not archive.directions:
        raise FormatError("archive needs at least one direction")
    _check_directions(archive.directions)
    expected = (len(archive.subjects), 2, len(archive.directions), archive.hrir_length)
    if archive.data.shape != expected:
        raise FormatError(f"data tensor shape {archive.data.shape} does not match "
                          f"manifest dimensions {expected}")
    if not np.all(np.isfinite(archive.data)):
        s = int(np.argwhere(~np.isfinite(archive.data))[0][0])
        raise FormatError(f"non-finite sample in subject {archive.subjects[s]!r}")
    return archive


def _subject_filename(subject_id):
    return f"subject_{subject_id}.f64le"


def save_archive(archive, directory):
    """Write manifest.json plus one binary per subject; returns manifest path."""
    validate_archive(archive)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "hrir-archive",
        "version": 1,
        "sample_rate": float(archive.sample_rate),
        "hrir_length": int(archive.hrir_length),
        "subjects": list(archive.subjects),
        "directions": [{"azimuth_deg": float(d.azimuth_deg),
                        "hemisphere": d.hemisphere}
                       for d in archive.directions],
    }
    path = directory / ARCHIVE_MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for i, sid in enumerate(archive.subjects):
        payload = np.ascontiguousarray(archive.data[i], dtype="<f8")
        (directory / _subject_filename(sid)).write_bytes(payload.tobytes())
    return path


def _manifest_field(manifest, key, kind, path):
    if key not in manifest:
        raise FormatError(f"{path}: manifest is missing {key!r}")
    value = manifest[key]
    if not isinstance(value, kind):
        raise FormatError(f"{path}: manifest field {key!r} has the wrong type")
    return value


def load_archive(path):
    """Load and validate an archive from its manifest path (or directory)."""
    path = Path(path)
    if path.is_dir():
        path = path / ARCHIVE_MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read archive manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed manifest JSON ({exc})") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != "hrir-archive":
        raise FormatError(f"{path}: not an hrir-archive manifest")
    if manifest.get("version") != 1:
        raise FormatError(f"{path}: unsupported archive version {manifest.get('version')!r}")
    sample_rate = _manifest_field(manifest, "sample_rate", (int, float), path)
    hrir_length = _manifest_field(manifest, "hrir_length", int, path)
    subjects = _manifest_field(manifest, "subjects", list, path)
    raw_dirs = _manifest_field(manifest, "directions", list, path)
    directions = []
    for entry in raw_dirs:
        if (not isinstance(entry, dict) or "azimuth_deg" not in entry
                or "hemisphere" not in entry):
            raise FormatError(f"{path}: direction entries need azimuth_deg and hemisphere")
        directions.append(Direction(float(entry["azimuth_deg"]),
                                    str(entry["hemisphere"])))
    directions = tuple(directions)
    subjects = tuple(str(s) for s in subjects)
    n_dir = len(directions)
    data = np.empty((len(subjects), 2, n_dir, int(hrir_length)))
    per_subject_bytes = 2 * n_dir * int(hrir_length) * 8
    for i, sid in enumerate(subjects):
        _check_subject_id(sid)
        blob_path = path.parent / _subject_filename(sid)
        try:
            blob = blob_path.read_bytes()
        except OSError as exc:
            raise FormatError(f"cannot read subject payload: {exc}") from exc
        if len(blob) != per_subject_bytes:
            raise FormatError(
                f"{blob_path}: payload holds {len(blob) // 8} samples but the "
                f"manifest declares {per_subject_bytes // 8} "
                f"(2 ears x {n_dir} directions x {hrir_length} samples)")
        data[i] = np.frombuffer(blob, dtype="<f8").reshape(2, n_dir, int(hrir_length))
    archive = HrirArchive(sample_rate=float(sample_rate),
                          hrir_length=int(hrir_length),
                          subjects=subjects, directions=directions, data=data)
    return validate_archive(archive)


def save_anthropometry(table, path):
    """Write the anthropometry CSV (header, units row, one row per subject)."""
    if table.values.shape != (len(table.subjects), N_MEASUREMENTS):
        raise FormatError(f"anthropometry values must be "
                          f"(subjects, {N_MEASUREMENTS}), got {table.values.shape}")
    lines = ["subject," + ",".join(MEASUREMENT_LABELS),
             "-," + ",".join(MEASUREMENT_UNITS)]
    for sid, row in zip(table.subjects, table.values):
        cells = ["nan" if not math.isfinite(v) else repr(float(v)) for v in row]
        lines.append(f"{sid}," + ",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def load_anthropometry(path, archive=None):
    """Load the anthropometry CSV; optionally check alignment with an archive."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read anthropometry table: {exc}") from exc
    if len(lines) < 2:
        raise FormatError(f"{path}: expected a header row and a units row")
    header = [c.strip() for c in lines[0].split(",")]
    expected_header = ["subject"] + list(MEASUREMENT_LABELS)
    if header != expected_header:
        raise FormatError(f"{path}: header must be "
                          f"{','.join(expected_header)!r}, got {lines[0]!r}")
    units = [c.strip() for c in lines[1].split(",")]
    if len(units) != 1 + N_MEASUREMENTS:
        raise FormatError(f"{path}: units row must have {1 + N_MEASUREMENTS} cells")
    for label, want, got in zip(MEASUREMENT_LABELS, MEASUREMENT_UNITS, units[1:]):
        if got != want:
            raise FormatError(f"{path}: column {label} must be in {want!r}, "
                              f"file declares {got!r}")
    subjects = []
    rows = []
    for ln, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 1 + N_MEASUREMENTS:
            raise FormatError(f"{path}:{ln}: expected {1 + N_MEASUREMENTS} cells, "
                              f"got {len(cells)}")
        subjects.append(cells[0])
        row = []
        for label, cell in zip(MEASUREMENT_LABELS, cells[1:]):
            try:
                row.append(float(cell))
            except ValueError:
                raise FormatError(f"{path}:{ln}: cannot parse {label}={cell!r} "
                                  "as a number") from None
        rows.append(row)
    if not subjects:
        raise FormatError(f"{path}: no subject rows")
    if len(set(subjects)) != len(subjects):
        raise FormatError(f"{path}: duplicate subject ids")
    table = AnthropometryTable(subjects=tuple(subjects),
                               values=np.array(rows, dtype=np.float64))
    if archive is not None and table.subjects != archive.subjects:
        raise FormatError(f"{path}: subjects do not match the archive "
                          f"(table: {table.subjects[:3]}..., "
                          f"archive: {archive.subjects[:3]}...)")
    return table


def _model_arrays(model):
    """Payload arrays in the declared on-disk order."""
    return [
        ("mean", model.pca.mean),
        ("basis", model.pca.basis),
        ("eigenvalues", model.pca.eigenvalues),
        ("weights", model.pca.weights),
        ("coefficients", model.regression.coefficients),
        ("mean_delays", model.mean_delays),
    ]


def save_model(model, path):
    """Serialize a TrainedModel; atomic (no partial file on failure)."""
    path = Path(path)
    header = {
        "format": "hrtf-model",
        "version": 1,
        "sample_rate": float(model.sample_rate),
        "n_bins": int(model.pca.n_bins),
        "q": int(model.pca.q),
        "n_eigenvalues": int(model.pca.eigenvalues.size),
        "n_columns": int(model.pca.weights.shape[1]),
        "subjects": list(model.subjects),
        "directions": [{"azimuth_deg": float(d.azimuth_deg),
                        "hemisphere": d.hemisphere}
                       for d in model.directions],
        "feature_indices": [int(i) for i in model.feature_indices],
        "feature_order": list(model.regression.feature_order),
        "feature_offsets": [float(v) for v in model.regression.offsets],
        "feature_scales": [float(v) for v in model.regression.scales],
        "conditioning": model.regression.conditioning.tolist(),
        "column_order": "subject-major, then ear (L=0, R=1), then direction",
        "provenance": model.provenance,
        "array_order": [name for name, _ in _model_arrays(model)],
        "shapes": {name: list(arr.shape) for name, arr in _model_arrays(model)},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for _, arr in _model_arrays(model):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def load_model(path):
    """Deserialize a TrainedModel, rebuilding the PCA column index."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read model file: {exc}") from exc
    if len(raw) < len(MODEL_MAGIC) + 8 or raw[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic bytes)")
    offset = len(MODEL_MAGIC)
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if offset + header_len > len(raw):
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed model header ({exc})") from exc
    offset += header_len
    if header.get("version") != 1:
        raise FormatError(f"{path}: unsupported model version {header.get('version')!r}")

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated payload")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += nbytes
        return arr.reshape(shape).copy()

    shapes = header["shapes"]
    mean = take(shapes["mean"])
    basis = take(shapes["basis"])
    eigenvalues = take(shapes["eigenvalues"])
    weights = take(shapes["weights"])
    coefficients = take(shapes["coefficients"])
    mean_delays = take(shapes["mean_delays"])
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} unexpected trailing bytes")

    subjects = tuple(str(s) for s in header["subjects"])
    directions = tuple(Direction(float(d["azimuth_deg"]), str(d["hemisphere"]))
                       for d in header["directions"])
    n_dir = len(directions)
    column_index = tuple((s, e, d) for s in subjects for e in (0, 1)
                         for d in range(n_dir))
    if len(column_index) != weights.shape[1]:
        raise FormatError(f"{path}: weight columns ({weights.shape[1]}) do not "
                          f"match subjects x ears x directions ({len(column_index)})")
    pca = PcaModel(mean=mean, basis=basis, eigenvalues=eigenvalues,
                   weights=weights, column_index=column_index)
    reg = RegressionModel(
        coefficients=coefficients,
        conditioning=np.asarray(header["conditioning"], dtype=np.float64),
        feature_order=tuple(header["feature_order"]),
        offsets=np.asarray(header["feature_offsets"], dtype=np.float64),
        scales=np.asarray(header["feature_scales"], dtype=np.float64))
    model = TrainedModel(pca=pca, regression=reg, mean_delays=mean_delays,
                         feature_indices=tuple(int(i) for i in header["feature_indices"]),
                         sample_rate=float(header["sample_rate"]),
                         directions=directions, subjects=subjects,
                         provenance=str(header["provenance"]))
    if FEATURE_LABELS != reg.feature_order:
        # future-proofing: the fixed 8-feature order is part of the format
        raise FormatError(f"{path}: unexpected feature order {reg.feature_order}")
    return model
