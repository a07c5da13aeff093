"""Deterministic CSV/JSON emission.

Floats are written with 17 significant digits so every value round-trips
exactly and repeated runs produce byte-identical files.
"""

import csv
import io
import json
import math

import numpy as np


def fmt(x):
    """Format one cell: floats as ``%.17g``, everything else via ``str``."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return str(x)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for _, v in _cells(header, row)])
    return buf.getvalue()


def _cells(header, row):
    if isinstance(row, dict):
        return [(h, row.get(h)) for h in header]
    return list(zip(header, row))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return _Float17(x)
    return obj


class _Float17(float):
    def __repr__(self):
        return format(float(self), ".17g")


class _Encoder(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        # the pure-Python encoder honours float.__repr__ on subclasses
        return json.encoder._make_iterencode(
            {}, self.default, json.encoder.py_encode_basestring_ascii, self.indent,
            lambda f: repr(f), self.key_separator, self.item_separator,
            self.sort_keys, self.skipkeys, _one_shot,
        )(o, 0)


def json_text(obj):
    return json.dumps(_jsonable(obj), cls=_Encoder, indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json_text(obj))
