"""File formats: JSON model files, CSV sequences, matrices and tables."""

import csv
import io
import json
import math

import numpy as np

from . import __version__
from .errors import AwhmmError, ModelFormatError
from .gaussian import Gaussian
from .hmm import GmmHmm, Sequence

MODEL_FORMAT = "awhmm-model"
MODEL_VERSION = "1"


def model_to_dict(h, metadata=None):
    meta = dict(h.metadata if metadata is None else metadata)
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dim": h.dim,
        "states": h.n_states,
        "transition": h.transition.tolist(),
        "means": [c.mean.tolist() for c in h.components],
        "covariances": [c.cov.tolist() for c in h.components],
        "metadata": meta,
    }


def dumps_model(h, metadata=None):
    """Canonical JSON text; floats use the shortest exact round-trip form."""
    return json.dumps(model_to_dict(h, metadata), indent=2, allow_nan=False) + "\n"


def save_model(h, path, metadata=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(h, metadata))


def _matrix(value, shape, name):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"field '{name}': not a numeric array ({exc})") from None
    if arr.shape != shape:
        raise ModelFormatError(f"field '{name}': expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"field '{name}': values must be finite")
    return arr


def model_from_dict(data):
    if not isinstance(data, dict):
        raise ModelFormatError("model file must contain a JSON object")
    for key in ("version", "dim", "states", "transition", "means", "covariances"):
        if key not in data:
            raise ModelFormatError(f"missing field '{key}'")
    if str(data["version"]) != MODEL_VERSION:
        raise ModelFormatError(f"field 'version': unsupported model version {data['version']!r}")
    d, m = data["dim"], data["states"]
    if not (isinstance(d, int) and isinstance(m, int) and d >= 1 and m >= 1):
        raise ModelFormatError("fields 'dim' and 'states' must be positive integers")
    trans = _matrix(data["transition"], (m, m), "transition")
    means = _matrix(data["means"], (m, d), "means")
    covs = _matrix(data["covariances"], (m, d, d), "covariances")
    comps = []
    for k in range(m):
        try:
            comps.append(Gaussian(means[k], covs[k]))
        except (AwhmmError, ValueError) as exc:
            raise ModelFormatError(f"field 'covariances[{k}]': {exc}") from None
    try:
        h = GmmHmm(trans, tuple(comps), dict(data.get("metadata") or {}))
        h.stationary
    except (AwhmmError, ValueError) as exc:
        raise ModelFormatError(f"field 'transition': {exc}") from None
    return h


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        return model_from_dict(data)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_sequence(path):
    """Read a CSV sequence: one row per time step, optional header row."""
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()) or row[0].startswith("#"):
                continue
            cells = [c.strip() for c in row]
            if not rows and width is None and not all(_is_number(c) for c in cells):
                width = len(cells)
                continue
            if width is not None and len(cells) != width:
                raise ModelFormatError(
                    f"{path}: row {lineno}: expected {width} columns, got {len(cells)}")
            width = len(cells)
            try:
                values = [float(c) for c in cells]
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise ModelFormatError(f"{path}: row {lineno}: could not parse {bad!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise ModelFormatError(f"{path}: row {lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise ModelFormatError(f"{path}: no observations")
    return Sequence(np.array(rows))


def metadata_line(**fields):
    fields = {"library": "awhmm", "version": __version__, **fields}
    return "# " + json.dumps(fields, sort_keys=True, default=str)


def write_table(path_or_buf, header, rows, **meta):
    buf = io.StringIO()
    buf.write(metadata_line(**meta) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def read_table(path):
    """Return (metadata dict, header, rows) from a file written by write_table."""
    meta = {}
    lines = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                try:
                    meta.update(json.loads(line[1:]))
                except json.JSONDecodeError:
                    pass
            elif line.strip():
                lines.append(line)
    reader = list(csv.reader(lines))
    if not reader:
        raise ModelFormatError(f"{path}: empty table")
    return meta, reader[0], reader[1:]


def write_matrix(path, values, names, **meta):
    rows = [[n, *map(float, r)] for n, r in zip(names, values)]
    write_table(path, ["", *names], rows, **meta)


def read_matrix(path):
    meta, header, rows = read_table(path)
    names = header[1:]
    if len(rows) != len(names) or any(len(r) != len(names) + 1 for r in rows):
        raise ModelFormatError(f"{path}: distance matrix is not square")
    try:
        values = np.array([[float(v) for v in r[1:]] for r in rows])
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return meta, names, values


def read_labels(path):
    """Two-column CSV ``name,label`` (a header row is allowed)."""
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ModelFormatError(f"{path}: row {lineno}: expected 'name,label'")
            if lineno == 1 and row[0].strip().lower() == "name":
                continue
            labels[row[0].strip()] = row[1].strip()
    return labels
