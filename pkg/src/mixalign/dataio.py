"""Delimited-text ingestion and artifact writers.

Input format: comma-separated with a header row; the first column is
``sample_id`` (any string, mapped to contiguous sample indices by first
appearance) and every remaining column is a numeric marker. Values are
written with full-precision ``repr`` so a write/ingest round trip
reproduces the array bitwise. Labels are 1-based in files.
"""

import numpy as np

from .state import Dataset


class DataFormatError(ValueError):
    """Raised for malformed input tables."""


def _parse_cell(cell, row_num, col_name):
    try:
        val = float(cell)
    except ValueError:
        raise DataFormatError(
            f"row {row_num}: marker column {col_name!r} has non-numeric value {cell!r}"
        ) from None
    if not np.isfinite(val):
        raise DataFormatError(
            f"row {row_num}: non-finite value {cell!r} in column {col_name!r}"
        )
    return val


def _is_float(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False


def ingest(path):
    """Read a delimited dataset; see the module docstring for the format.

    Distinct failure modes (empty file, missing header, too few columns,
    non-numeric or non-finite cells) raise :class:`DataFormatError` with
    the offending row number where applicable.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise DataFormatError("empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if len(header) < 2:
        raise DataFormatError("need at least one marker column besides sample_id")
    marker_names = header[1:]
    if all(_is_float(name) for name in marker_names):
        raise DataFormatError("missing header row (first line looks like data)")
    ids, id_of = [], {}
    sample_of = np.empty(len(lines) - 1, dtype=np.int64)
    y = np.empty((len(lines) - 1, len(marker_names)))
    for i, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise DataFormatError(
                f"row {i}: expected {len(header)} columns, found {len(cells)}"
            )
        sid = cells[0]
        if sid not in id_of:
            id_of[sid] = len(ids)
            ids.append(sid)
        sample_of[i - 2] = id_of[sid]
        for d, cell in enumerate(cells[1:]):
            y[i - 2, d] = _parse_cell(cell, i, marker_names[d])
    return Dataset(y, sample_of, sample_ids=ids, marker_names=marker_names)


def _sample_id_strings(data):
    if data.sample_ids is not None:
        return [str(s) for s in data.sample_ids]
    return [str(j + 1) for j in range(data.J)]


def _marker_name_strings(data):
    if data.marker_names is not None:
        return list(data.marker_names)
    return [f"m{d + 1}" for d in range(data.p)]


def write_dataset(path, data):
    """Write a dataset in the ingestion format with round-trip precision."""
    ids = _sample_id_strings(data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["sample_id"] + _marker_name_strings(data)) + "\n")
        for i in range(data.n):
            cells = [ids[data.sample_of[i]]] + [repr(v) for v in data.y[i]]
            fh.write(",".join(cells) + "\n")


def write_labels(path, data, labels):
    """Final classification: sample_id plus the 1-based cluster label."""
    ids = _sample_id_strings(data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample_id,label\n")
        for i in range(data.n):
            fh.write(f"{ids[data.sample_of[i]]},{int(labels[i]) + 1}\n")


def write_calibrated(path, data, calibrated):
    """Calibrated observations with sample ids and 1-based labels."""
    ids = _sample_id_strings(data)
    with open(path, "w", encoding="utf-8") as fh:
        header = ["sample_id"] + _marker_name_strings(data) + ["label"]
        fh.write(",".join(header) + "\n")
        for i in range(data.n):
            cells = (
                [ids[data.sample_of[i]]]
                + [repr(v) for v in calibrated.y_tilde[i]]
                + [str(int(calibrated.labels[i]) + 1)]
            )
            fh.write(",".join(cells) + "\n")


def write_diagnostics(path, data, counts, alignment, min_weight):
    """Per-sample active-cluster counts plus the alignment score."""
    ids = _sample_id_strings(data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample_id,active_clusters,min_weight,alignment_score\n")
        for j in range(data.J):
            fh.write(f"{ids[j]},{int(counts[j])},{min_weight!r},{alignment!r}\n")


def write_marginals(path, data, table):
    """Histogram export: one row per (marker, sample, bin)."""
    ids = _sample_id_strings(data)
    names = _marker_name_strings(data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("marker,sample_id,bin_left,bin_right,density\n")
        for name, entry in zip(names, table):
            edges, density = entry["edges"], entry["density"]
            for j in range(data.J):
                for b in range(len(edges) - 1):
                    fh.write(
                        f"{name},{ids[j]},{edges[b]!r},{edges[b + 1]!r},"
                        f"{density[j, b]!r}\n"
                    )


def write_sweep(path, data, rows):
    """Coarsening sweep table: one row per (zeta, sample)."""
    ids = _sample_id_strings(data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("zeta,sample_id,active_clusters,alignment_score,constant_count,error\n")
        for row in rows:
            if row.counts is None:
                fh.write(f"{row.zeta!r},,,,,{row.error}\n")
                continue
            for j in range(data.J):
                fh.write(
                    f"{row.zeta!r},{ids[j]},{int(row.counts[j])},"
                    f"{row.alignment!r},{int(row.constant_count)},\n"
                )
