"""CSV/TSV readers and writers for run outputs.

Every table starts with one comment line ``# riemopt <schema> v<N>`` and may
carry further ``# key=value`` comment lines before the column header.  Floats
are written with ``repr`` so they round-trip exactly and reruns are
byte-identical.
"""

import csv
import math

import numpy as np

from .embed import EmbeddingTable

SCHEMA_VERSION = 1

SCHEMAS = {
    "embed-metrics": ("epoch", "mean_loss", "mean_rank", "map", "alpha", "beta1"),
    "pca-metrics": ("iter", "gap", "rel_gap", "best_gap", "f", "alpha"),
    "toy-metrics": ("iter", "f", "avg_subopt", "alpha", "beta1"),
    "timing": ("step", "elapsed_ms"),
    "bound-report": ("n", "term1", "term2", "term3", "total", "measured"),
    "component-trace": ("t", "component", "grad_norm", "m_norm", "sqrt_vhat", "beta1"),
}


class TableFormatError(ValueError):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _parse(s):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def write_table(path, schema, rows, columns=None, meta=None):
    """Write ``rows`` (dicts or sequences) under a versioned header comment."""
    columns = tuple(columns or SCHEMAS[schema])
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# riemopt {schema} v{SCHEMA_VERSION}\n")
        for k, v in (meta or {}).items():
            f.write(f"# {k}={_fmt(v)}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c) for c in columns]
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path):
    """Return ``(schema, meta, columns, rows)`` with rows as dicts.

    Numeric cells come back as ``int`` or ``float`` and empty cells as
    ``None``.
    """
    schema, meta = None, {}
    with open(path, encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    body = []
    for i, line in enumerate(lines):
        if line.startswith("#"):
            text = line[1:].strip()
            if i == 0 and text.startswith("riemopt "):
                schema = text.split()[1]
            elif "=" in text:
                k, v = text.split("=", 1)
                meta[k.strip()] = _parse(v.strip())
        else:
            body.append(line)
    if schema is None:
        raise TableFormatError(f"{path}: missing schema header")
    reader = csv.reader(body)
    try:
        columns = next(reader)
    except StopIteration:
        raise TableFormatError(f"{path}: missing column header") from None
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(columns):
            raise TableFormatError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(columns)}")
        rows.append({c: _parse(v) for c, v in zip(columns, rec)})
    return schema, meta, columns, rows


def write_embedding(path, table):
    """``symbol<TAB>x1<TAB>...<TAB>xd`` per noun, full double precision."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# riemopt embedding v{SCHEMA_VERSION}\n")
        for sym, row in zip(table.nouns, table.coords):
            f.write(sym + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
    return path


def read_embedding(path):
    nouns, rows = [], []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            sym, *vals = line.split("\t")
            try:
                rows.append([float(v) for v in vals])
            except ValueError:
                raise TableFormatError(f"{path}: line {lineno}: non-numeric coordinate") from None
            if len(rows[-1]) != len(rows[0]) or not rows[-1]:
                raise TableFormatError(f"{path}: line {lineno}: inconsistent dimension")
            nouns.append(sym)
    if not rows:
        raise TableFormatError(f"{path}: no embedding rows")
    return EmbeddingTable(nouns, np.array(rows, dtype=np.float64))


def write_matrix(path, a):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# riemopt matrix v{SCHEMA_VERSION}\n")
        w = csv.writer(f, lineterminator="\n")
        for row in a:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_matrix(path):
    """Read a dense matrix: one comma-separated row per line, ``#`` comments skipped."""
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, rec in enumerate(csv.reader(f), start=1):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                raise TableFormatError(f"{path}: line {lineno}: non-numeric value") from None
            if len(rows[-1]) != len(rows[0]):
                raise TableFormatError(f"{path}: line {lineno}: expected {len(rows[0])} columns")
    if not rows:
        raise TableFormatError(f"{path}: empty matrix")
    return np.array(rows, dtype=np.float64)
