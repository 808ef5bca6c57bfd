"""Observable-data representation for a trial sample plus a target-population sample.

Rows with ``s == 1`` come from the randomized trial and record ``(X, A, Y)``.
Rows with ``s == 0`` come from the target population and may additionally
record covariates ``W``. Trial rows never carry ``W``; internally their ``W``
cells are stored as NaN.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DatasetError

OUTCOME_KINDS = ("binary", "count", "continuous")
ESTIMATORS = ("phi", "chi", "psi")


@dataclass(frozen=True)
class ObservationRow:
    x: tuple
    s: int
    a: int
    y: float
    w: tuple | None = None


@dataclass(frozen=True)
class ColumnSchema:
    """Column-name bindings for a delimited table."""

    s: str
    a: str
    y: str
    x: tuple
    w: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "w", tuple(self.w))
        names = [self.s, self.a, self.y, *self.x, *self.w]
        if len(set(names)) != len(names):
            raise DatasetError(f"column bindings must be distinct, got {names}")


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


class AnalysisDataset:
    """Immutable composite dataset of trial (``s=1``) and target (``s=0``) rows.

    Parameters
    ----------
    x : array_like, shape (n, p)
    s, a : array_like of {0, 1}, shape (n,)
    y : array_like, shape (n,)
    x_names : sequence of str
    w : array_like, shape (n, q), optional
        Values on trial rows are ignored and stored as NaN.
    w_names : sequence of str
    outcome_kind : {"binary", "count", "continuous"}
    """

    def __init__(self, x, s, a, y, x_names, w=None, w_names=(), outcome_kind="continuous"):
        s_arr = np.asarray(s)
        n = s_arr.shape[0]
        x_names = tuple(x_names)
        w_names = tuple(w_names)
        x_arr = np.asarray(x, dtype=float).reshape(n, len(x_names))
        if w_names:
            if w is None:
                raise DatasetError("w_names given without w values")
            w_arr = np.array(w, dtype=float).reshape(n, len(w_names))
        else:
            w_arr = np.empty((n, 0))
        if outcome_kind not in OUTCOME_KINDS:
            raise DatasetError(f"outcome_kind must be one of {OUTCOME_KINDS}, got {outcome_kind!r}")
        if len(set(x_names + w_names)) != len(x_names) + len(w_names):
            raise DatasetError("covariate names must be distinct")

        _check_binary("s", s_arr)
        _check_binary("a", np.asarray(a))
        y_arr = np.asarray(y, dtype=float)
        if y_arr.shape != (n,) or np.asarray(a).shape != (n,):
            raise DatasetError("s, a and y must have the same length")
        bad = np.flatnonzero(~np.isfinite(y_arr))
        if bad.size:
            raise DatasetError(f"non-finite outcome at rows {bad.tolist()}", bad)
        bad = np.flatnonzero(~np.isfinite(x_arr).all(axis=1))
        if bad.size:
            raise DatasetError(f"non-finite X at rows {bad.tolist()}", bad)

        trial = s_arr == 1
        if not trial.any():
            raise DatasetError("empty trial stratum (no rows with s=1)")
        if trial.all():
            raise DatasetError("empty target stratum (no rows with s=0)")
        if w_names:
            w_arr[trial] = np.nan
            bad = np.flatnonzero(~trial & ~np.isfinite(w_arr).all(axis=1))
            if bad.size:
                raise DatasetError(f"missing or non-finite W on target rows {bad.tolist()}", bad)

        if outcome_kind == "binary":
            bad = np.flatnonzero((y_arr != 0) & (y_arr != 1))
            if bad.size:
                raise DatasetError(f"binary outcome with y outside {{0,1}} at rows {bad.tolist()}", bad)
        elif outcome_kind == "count":
            bad = np.flatnonzero((y_arr < 0) | (y_arr != np.floor(y_arr)))
            if bad.size:
                raise DatasetError(f"count outcome must be a nonnegative integer, rows {bad.tolist()}", bad)

        self.x = _frozen(x_arr, float)
        self.w = _frozen(w_arr, float)
        self.s = _frozen(s_arr, np.int8)
        self.a = _frozen(a, np.int8)
        self.y = _frozen(y_arr, float)
        self.x_names = x_names
        self.w_names = w_names
        self.outcome_kind = outcome_kind

    @classmethod
    def from_rows(cls, rows: Sequence[ObservationRow], x_names, w_names=(), outcome_kind="continuous"):
        w_names = tuple(w_names)
        w = []
        for i, r in enumerate(rows):
            if r.s == 1 and r.w is not None:
                raise DatasetError(f"row {i}: trial rows may not carry W", [i])
            if r.s == 0 and w_names and (r.w is None or len(r.w) != len(w_names)):
                raise DatasetError(f"row {i}: W must have dimension {len(w_names)}", [i])
            w.append(r.w if r.w is not None else (np.nan,) * len(w_names))
        return cls(
            x=[r.x for r in rows], s=[r.s for r in rows], a=[r.a for r in rows],
            y=[r.y for r in rows], x_names=x_names,
            w=w if w_names else None, w_names=w_names, outcome_kind=outcome_kind,
        )

    def __len__(self):
        return self.s.shape[0]

    def __repr__(self):
        return (f"AnalysisDataset(n1={self.n1}, n0={self.n0}, x_names={self.x_names}, "
                f"w_names={self.w_names}, outcome_kind={self.outcome_kind!r})")

    @property
    def n(self):
        return len(self)

    @property
    def n1(self):
        return int(np.count_nonzero(self.s == 1))

    @property
    def n0(self):
        return int(np.count_nonzero(self.s == 0))

    @property
    def trial(self):
        return self.s == 1

    @property
    def target(self):
        return self.s == 0

    @property
    def rows(self):
        out = []
        for i in range(self.n):
            w = tuple(self.w[i]) if (self.w_names and self.s[i] == 0) else None
            out.append(ObservationRow(tuple(self.x[i]), int(self.s[i]), int(self.a[i]), float(self.y[i]), w))
        return out

    def columns(self, mask=None) -> dict:
        """Covariate columns by name (X and W), restricted to ``mask`` if given."""
        x = self.x if mask is None else self.x[mask]
        w = self.w if mask is None else self.w[mask]
        cols = {name: x[:, j] for j, name in enumerate(self.x_names)}
        cols.update({name: w[:, j] for j, name in enumerate(self.w_names)})
        return cols

    def take(self, indices) -> "AnalysisDataset":
        """New dataset made of the given rows (repeats allowed), in the given order."""
        idx = np.asarray(indices, dtype=np.intp)
        return AnalysisDataset(
            self.x[idx], self.s[idx], self.a[idx], self.y[idx], self.x_names,
            self.w[idx] if self.w_names else None, self.w_names, self.outcome_kind,
        )

    def equals(self, other: "AnalysisDataset") -> bool:
        return (
            self.x_names == other.x_names and self.w_names == other.w_names
            and self.outcome_kind == other.outcome_kind
            and np.array_equal(self.s, other.s) and np.array_equal(self.a, other.a)
            and np.array_equal(self.y, other.y) and np.array_equal(self.x, other.x)
            and np.array_equal(self.w, other.w, equal_nan=True)
        )


def _check_binary(name, arr):
    bad = np.flatnonzero((arr != 0) & (arr != 1))
    if bad.size:
        raise DatasetError(f"{name} outside {{0,1}} at rows {bad.tolist()}", bad)


def _parse_cell(text, column, row):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DatasetError(f"non-numeric cell {text!r} in column {column!r} at row {row}", [row]) from None
    if not math.isfinite(value):
        raise DatasetError(f"non-finite cell {text!r} in column {column!r} at row {row}", [row])
    return value


def _read_table(source, schema, delimiter=",", fixed_s=None):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _read_table(fh, schema, delimiter, fixed_s)

    reader = csv.reader(source, delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DatasetError("empty input: a header row is required") from None
    bound = ([schema.s] if fixed_s is None else []) + [schema.a, schema.y, *schema.x]
    if fixed_s != 1:
        bound += list(schema.w)
    missing = [c for c in bound if c not in header]
    if missing:
        raise DatasetError(f"missing column(s): {', '.join(missing)}")
    pos = {name: header.index(name) for name in header}

    s, a, y, x, w = [], [], [], [], []
    for i, record in enumerate(reader):
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(header):
            raise DatasetError(f"row {i} has {len(record)} cells, header has {len(header)}", [i])

        def cell(c):
            return _parse_cell(record[pos[c]].strip(), c, i)

        si = cell(schema.s) if fixed_s is None else fixed_s
        ai = cell(schema.a)
        if si not in (0.0, 1.0):
            raise DatasetError(f"s outside {{0,1}} at row {i}: {record[pos[schema.s]]!r}", [i])
        if ai not in (0.0, 1.0):
            raise DatasetError(f"a outside {{0,1}} at row {i}: {record[pos[schema.a]]!r}", [i])
        s.append(int(si))
        a.append(int(ai))
        y.append(cell(schema.y))
        x.append([cell(c) for c in schema.x])
        w.append([cell(c) for c in schema.w] if si == 0 else [np.nan] * len(schema.w))
    n = len(s)
    return {
        "s": s, "a": a, "y": y,
        "x": np.array(x, dtype=float).reshape(n, len(schema.x)),
        "w": np.array(w, dtype=float).reshape(n, len(schema.w)),
    }


def _build(parts, schema, outcome_kind):
    if not any(len(p["s"]) for p in parts):
        raise DatasetError("no data rows")
    return AnalysisDataset(
        x=np.vstack([p["x"] for p in parts]),
        s=np.concatenate([np.asarray(p["s"], dtype=int) for p in parts]),
        a=np.concatenate([np.asarray(p["a"], dtype=int) for p in parts]),
        y=np.concatenate([np.asarray(p["y"], dtype=float) for p in parts]),
        x_names=schema.x, w=np.vstack([p["w"] for p in parts]) if schema.w else None,
        w_names=schema.w, outcome_kind=outcome_kind,
    )


def load_dataset(source, schema: ColumnSchema, outcome_kind: str, delimiter=",") -> AnalysisDataset:
    """Read a delimited table with a header row into an :class:`AnalysisDataset`.

    ``source`` is a path or an open text stream. Row indices in error messages
    are zero-based data rows (the header is not counted). W cells on trial rows
    are ignored; they may be blank.
    """
    return _build([_read_table(source, schema, delimiter)], schema, outcome_kind)


def load_trial_target(trial_source, target_source, schema: ColumnSchema, outcome_kind: str,
                      delimiter=",") -> AnalysisDataset:
    """Load separate trial and target tables; ``schema.s`` is not read from either.

    Trial rows come first in the resulting dataset.
    """
    trial = _read_table(trial_source, schema, delimiter, fixed_s=1)
    target = _read_table(target_source, schema, delimiter, fixed_s=0)
    return _build([trial, target], schema, outcome_kind)


def _fmt(value):
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_dataset(ds: AnalysisDataset, target=None, s_col="s", a_col="a", y_col="y") -> str | None:
    """Write ``ds`` as comma-separated text; returns the text when ``target`` is None.

    Floats use the shortest round-tripping representation, so re-loading the
    output reproduces every value exactly. Trial rows get blank W cells.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([s_col, a_col, y_col, *ds.x_names, *ds.w_names])
    for i in range(ds.n):
        w = [_fmt(v) for v in ds.w[i]] if ds.s[i] == 0 else [""] * len(ds.w_names)
        writer.writerow([int(ds.s[i]), int(ds.a[i]), _fmt(ds.y[i]), *(_fmt(v) for v in ds.x[i]), *w])
    text = buf.getvalue()
    if target is None:
        return text
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        target.write(text)
    return None


def schema_for(ds: AnalysisDataset, s_col="s", a_col="a", y_col="y") -> ColumnSchema:
    return ColumnSchema(s=s_col, a=a_col, y=y_col, x=ds.x_names, w=ds.w_names)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    rows: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple
    warnings: tuple
    summary: Mapping = field(default_factory=dict)

    @property
    def ok(self):
        return not self.errors

    def to_dict(self):
        def conv(v):
            return {"code": v.code, "message": v.message, "rows": list(v.rows)}
        return {
            "errors": [conv(v) for v in self.errors],
            "warnings": [conv(v) for v in self.warnings],
            "summary": {k: dict(v) for k, v in self.summary.items()},
        }


def _cell_summary(ds):
    summary = {}
    for s in (1, 0):
        for a in (1, 0):
            mask = (ds.s == s) & (ds.a == a)
            ys = ds.y[mask]
            summary[f"s={s},a={a}"] = {
                "count": int(mask.sum()),
                "mean_y": float(ys.mean()) if ys.size else None,
                "var_y": float(ys.var(ddof=1)) if ys.size > 1 else None,
            }
    return summary


def validate_dataset(ds: AnalysisDataset, intended_estimator: str) -> ValidationReport:
    """Check the condition-level requirements of ``intended_estimator`` on ``ds``.

    phi requires every target row to be untreated; chi and psi require at least
    one untreated target row. All estimators need both trial arms.
    """
    if intended_estimator not in ESTIMATORS:
        raise ValueError(f"intended_estimator must be one of {ESTIMATORS}")
    errors, warnings = [], []
    for arm in (1, 0):
        if not np.any(ds.trial & (ds.a == arm)):
            errors.append(Violation("A3_VIOLATED", f"A3 violated: no trial rows with a={arm}"))

    treated_target = tuple(np.flatnonzero(ds.target & (ds.a == 1)).tolist())
    target_controls = int(np.count_nonzero(ds.target & (ds.a == 0)))
    if intended_estimator == "phi":
        if treated_target:
            errors.append(Violation(
                "A5_VIOLATED",
                f"A5 violated: {len(treated_target)} target rows with a=1 "
                "(uniform use of control in the target population is required for phi)",
                treated_target,
            ))
    else:
        if target_controls == 0:
            cond = "B2" if intended_estimator == "chi" else "C2"
            errors.append(Violation(
                f"{cond}_VIOLATED",
                f"{cond} violated: no target rows with a=0, control-treatment positivity fails",
            ))
        if not treated_target:
            warnings.append(Violation(
                "NO_TREATMENT_VARIATION",
                "no target rows with a=1; phi applies and gives the same answer with fewer models",
            ))
    if intended_estimator == "psi" and not ds.w_names:
        warnings.append(Violation("NO_W", "psi requested without W covariates; it reduces to chi"))
    if intended_estimator != "psi" and ds.w_names:
        warnings.append(Violation("W_UNUSED", f"W covariates {list(ds.w_names)} are ignored by {intended_estimator}"))
    return ValidationReport(tuple(errors), tuple(warnings), _cell_summary(ds))
