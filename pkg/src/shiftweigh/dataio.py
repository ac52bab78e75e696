"""CSV ingestion and export for the command-line surface.

Dialect: a header row is required.  Column names ``y``, ``beta_true``
and anything starting with ``loss_`` are reserved; every other column is
a feature.  Parse failures name the offending row and column.  Floats
are written with ``repr``, which round-trips exactly.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .errors import InputError
from .estimators import Dataset

RESERVED_LABEL = "y"
RESERVED_BETA = "beta_true"
RESERVED_LOSS_PREFIX = "loss_"


def read_table(path: str) -> tuple[list[str], list[list[str]]]:
    """Header and raw string rows of a CSV file, with shape diagnostics."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and not all(c.strip() == "" for c in r)]
    if not rows:
        raise InputError(f"{path}: file is empty")
    header = [c.strip() for c in rows[0]]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    body = rows[1:]
    if not body:
        raise InputError(f"{path}: no data rows after the header")
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(
                f"{path}: row {i} has {len(row)} cells, expected {len(header)}"
            )
    return header, body


def _parse_columns(path: str, header, body, names) -> np.ndarray:
    idx = [header.index(n) for n in names]
    out = np.empty((len(body), len(names)))
    for r, row in enumerate(body, start=2):
        for c, j in enumerate(idx):
            cell = row[j].strip()
            try:
                out[r - 2, c] = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: row {r}, column {header[j]!r}: cannot parse "
                    f"{cell!r} as a number"
                ) from None
    return out


def feature_columns(header: list[str]) -> list[str]:
    return [
        n for n in header
        if n != RESERVED_LABEL and n != RESERVED_BETA
        and not n.startswith(RESERVED_LOSS_PREFIX)
    ]


def read_dataset(
    path: str,
    require_labels: bool = False,
    label_range=None,
    feature_order: list[str] | None = None,
):
    """Read a CSV into a Dataset plus side columns.

    Returns (dataset, info) where info holds the feature column names,
    and the true-weight column when present.  ``feature_order`` forces
    the feature columns of this file to match another file's, by name.
    """
    header, body = read_table(path)
    feats = feature_columns(header)
    if not feats:
        raise InputError(f"{path}: no feature columns found")
    if feature_order is not None:
        if set(feats) != set(feature_order):
            raise InputError(
                f"{path}: feature columns {feats} do not match the training "
                f"file's {feature_order}"
            )
        feats = list(feature_order)
    X = _parse_columns(path, header, body, feats)
    y = None
    if RESERVED_LABEL in header:
        y = _parse_columns(path, header, body, [RESERVED_LABEL])[:, 0]
    elif require_labels:
        raise InputError(f"{path}: a label column named 'y' is required")
    dataset = Dataset.from_arrays(X, y, label_range=label_range)
    info = {"feature_names": feats, "beta_true": None}
    if RESERVED_BETA in header:
        info["beta_true"] = _parse_columns(path, header, body, [RESERVED_BETA])[:, 0]
    return dataset, info


def read_losses(path: str) -> tuple[np.ndarray, list[str]]:
    """Loss matrix from a CSV: the ``loss_*`` columns if any exist,
    otherwise every column."""
    header, body = read_table(path)
    names = [n for n in header if n.startswith(RESERVED_LOSS_PREFIX)]
    if not names:
        names = list(header)
    Z = _parse_columns(path, header, body, names)
    return Z, names


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_weights_csv(path: str, beta: np.ndarray) -> None:
    write_csv(path, ["row", "beta_hat"],
              ((i, float(b)) for i, b in enumerate(beta)))


TRIAL_COLUMNS = [
    "scenario", "estimator", "n_tr", "n_te", "seed",
    "abs_error", "lhat", "runtime_ms",
]


def write_trials_csv(path: str, records) -> None:
    rows = []
    for rec in records:
        d = rec.csv_row()
        rows.append([d[c] for c in TRIAL_COLUMNS])
    write_csv(path, TRIAL_COLUMNS, rows)


def write_medians_csv(path: str, comparison) -> None:
    rows = []
    for estimator in comparison.estimators:
        for n in comparison.n_grid:
            rows.append([estimator, n, comparison.medians[estimator][n]])
    write_csv(path, ["estimator", "n_tr", "median_abs_error"], rows)


def export_scenario_csv(
    scenario, n_tr: int, n_te: int, seed: int, train_path: str, test_path: str
) -> None:
    """Write one sampled train/test pair; the train file carries labels
    and the true density-ratio column for downstream correlation checks."""
    from .scenarios import trial_rng

    rng = trial_rng(seed)
    X_tr = scenario.sample_train(rng, n_tr)
    y = scenario.sample_labels(rng, X_tr)
    X_te = scenario.sample_test(rng, n_te)
    beta = scenario.beta(X_tr)
    feat_names = [f"x{j + 1}" for j in range(scenario.dim)]
    write_csv(
        train_path, feat_names + ["y", "beta_true"],
        ([*map(float, X_tr[i]), float(y[i]), float(beta[i])] for i in range(n_tr)),
    )
    write_csv(
        test_path, feat_names,
        ([*map(float, X_te[i])] for i in range(n_te)),
    )
