"""
Files in and out: tab-delimited series, JSON run summaries, the content-hashed
Monte-Carlo cache and trace-file ingestion.
"""
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from nanofiber_probe.errors import DataFileError
from nanofiber_probe.heating_mc import HeatingTable

logger = logging.getLogger(__name__)

NUMBER_FORMAT = "%.10e"


class NumpyEncoder(json.JSONEncoder):
    """Helper class to convert numpy scalars and arrays to JSON."""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (tuple, set)):
            return list(o)
        return super().default(o)


def write_table(path, columns, rows):
    """Tab-delimited rows with a '#' header line of column names."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(columns):
        raise ValueError(f"{len(columns)} column names for {rows.shape[1]} columns")
    np.savetxt(path, rows, fmt=NUMBER_FORMAT, delimiter="\t", header="\t".join(columns), comments="# ")
    logger.info("Wrote %d rows to %s", len(rows), path)
    return path


def write_summary(path, summary):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, cls=NumpyEncoder, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote summary to %s", path)
    return path


def cache_key(payload):
    """sha256 of the canonical JSON form of payload."""
    canonical = json.dumps(payload, cls=NumpyEncoder, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


class ResultCache:
    """Heating tables and calibration records keyed by a content hash, one file each."""

    def __init__(self, directory):
        self.directory = Path(directory) if directory is not None else None

    def _path(self, key, suffix):
        return self.directory / f"{key}{suffix}"

    def load_heating(self, key):
        if self.directory is None:
            return None
        path = self._path(key, ".npz")
        if not path.exists():
            logger.info("CACHE MISS. Running Monte-Carlo heating (%s)...", key[:12])
            return None
        logger.info("CACHE HIT! Loading heating table %s", path.name)
        with np.load(path) as data:
            return HeatingTable(
                per_state=data["per_state"],
                standard_errors=data["standard_errors"],
                recoil_temperature=float(data["recoil_temperature"]),
                samples=int(data["samples"]),
                seed=int(data["seed"]),
                sampling=str(data["sampling"]),
            )

    def store_heating(self, key, table):
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        np.savez(
            self._path(key, ".npz"),
            per_state=table.per_state,
            standard_errors=table.standard_errors,
            recoil_temperature=table.recoil_temperature,
            samples=table.samples,
            seed=table.seed,
            sampling=table.sampling,
        )

    def load_record(self, key):
        if self.directory is None:
            return None
        path = self._path(key, ".json")
        if not path.exists():
            logger.info("CACHE MISS. Running calibration (%s)...", key[:12])
            return None
        logger.info("CACHE HIT! Returning stored calibration %s", path.name)
        return json.loads(path.read_text(encoding="utf-8"))

    def store_record(self, key, record):
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        self._path(key, ".json").write_text(
            json.dumps(record, cls=NumpyEncoder, sort_keys=True), encoding="utf-8"
        )


def read_series(path, x_column=0, y_column=1):
    """(x, y, column names) from a delimited text file.

    Lines starting with '#' are comments; the last comment line before the
    data, or a first non-numeric line, names the columns. Tabs, commas and
    plain whitespace are accepted as delimiters. Columns are selected by
    index or by name.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataFileError(f"cannot read data file: {e.strerror}", str(path), 0) from e

    names = []
    numbers, rows = [], []
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if not rows:
                names = _split(stripped.lstrip("#").strip(), _delimiter(stripped))
            continue
        if not rows and not names:
            fields = _split(stripped, _delimiter(stripped))
            if not _numeric(fields[0]):
                names = fields
                continue
        numbers.append(number)
        rows.append(stripped)
    if not rows:
        raise DataFileError("no data rows", str(path), len(lines))

    delimiter = _delimiter(rows[0])
    columns = (
        _column_index(x_column, names, path, numbers[0]),
        _column_index(y_column, names, path, numbers[0]),
    )
    try:
        data = np.loadtxt(rows, delimiter=delimiter, usecols=columns, ndmin=2)
    except ValueError:
        raise _locate(rows, numbers, delimiter, columns, path) from None

    x, y = data[:, 0], data[:, 1]
    bad = ~(np.isfinite(x) & np.isfinite(y))
    if bad.any():
        raise DataFileError("non-finite value", str(path), numbers[int(np.argmax(bad))])
    steps = np.diff(x) <= 0
    if steps.any():
        index = int(np.argmax(steps)) + 1
        raise DataFileError(
            f"first column must be strictly increasing ({x[index]!r} after {x[index - 1]!r})",
            str(path), numbers[index],
        )
    return x, y, names


def _delimiter(text):
    if "\t" in text:
        return "\t"
    return "," if "," in text else None


def _split(text, delimiter):
    return [field.strip() for field in text.split(delimiter)]


def _locate(rows, numbers, delimiter, columns, path):
    """DataFileError naming the first row np.loadtxt could not parse."""
    for text, number in zip(rows, numbers):
        fields = _split(text, delimiter)
        if len(fields) <= max(columns):
            return DataFileError(
                f"expected at least {max(columns) + 1} columns, found {len(fields)}", str(path), number
            )
        if not all(_numeric(fields[c]) for c in columns):
            return DataFileError(f"non-numeric value in {text!r}", str(path), number)
    return DataFileError("unparseable data", str(path), numbers[0])


def _numeric(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _column_index(column, names, path, line):
    if isinstance(column, int):
        return column
    if column not in names:
        raise DataFileError(f"no column named {column!r} (have {names})", str(path), line)
    return names.index(column)


def response(status, body):
    """Handler return value: status code plus a JSON body."""
    return {
        "statusCode": status,
        "headers": {"Content-Type": "application/json"},
        "body": json.dumps(body, cls=NumpyEncoder, sort_keys=True),
    }
