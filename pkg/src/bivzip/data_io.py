"""CSV ingestion and validation for observation tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import TableError
from .model import ModelSpec

REQUIRED = ("y1", "y2", "effort")


@dataclass(frozen=True)
class ObservationTable:
    frame: pd.DataFrame

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def y1(self) -> np.ndarray:
        return self.frame["y1"].to_numpy(dtype=np.int64)

    @property
    def y2(self) -> np.ndarray:
        return self.frame["y2"].to_numpy(dtype=np.int64)


def _check_counts(frame: pd.DataFrame, col: str):
    vals = pd.to_numeric(frame[col], errors="coerce")
    bad = vals.isna()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise TableError(f"unparseable value in column '{col}' at row {row}")
    nonint = vals != np.floor(vals)
    if nonint.any():
        row = int(np.flatnonzero(nonint)[0])
        raise TableError(
            f"column '{col}' must be integral; row {row} has {vals.iloc[row]}"
        )
    if (vals < 0).any():
        row = int(np.flatnonzero(vals < 0)[0])
        raise TableError(f"column '{col}' must be nonnegative; see row {row}")
    return vals.astype(np.int64)


def validate_table(frame: pd.DataFrame, spec: ModelSpec) -> ObservationTable:
    """Validate and coerce a raw table against the model spec.

    Checks the required columns, count integrality, positive effort,
    presence of every spec covariate, missing values (rejected with the
    offending row index), and finiteness of continuous covariates.
    """
    used = list(REQUIRED) + spec.covariates()
    for col in ("y1", "y2", "effort"):
        if col not in frame.columns:
            raise TableError(f"missing required column '{col}'")
    for col in spec.covariates():
        if col not in frame.columns:
            raise TableError(f"missing covariate column '{col}'")
    frame = frame.copy()
    for col in used:
        miss = frame[col].isna()
        if miss.any():
            row = int(np.flatnonzero(miss)[0])
            raise TableError(f"missing value in column '{col}' at row {row}")
    frame["y1"] = _check_counts(frame, "y1")
    frame["y2"] = _check_counts(frame, "y2")
    eff = pd.to_numeric(frame["effort"], errors="coerce")
    bad = eff.isna() | ~np.isfinite(eff) | (eff <= 0)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise TableError(f"effort must be positive and finite; see row {row}")
    frame["effort"] = eff.astype(float)
    for col in spec.covariates():
        if not spec.is_categorical(col):
            vals = pd.to_numeric(frame[col], errors="coerce")
            bad = vals.isna() | ~np.isfinite(vals)
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise TableError(
                    f"non-finite value in continuous column '{col}' at row {row}"
                )
            frame[col] = vals.astype(float)
    return ObservationTable(frame.reset_index(drop=True))


def load_table(path, spec: ModelSpec) -> ObservationTable:
    """Read a CSV file (header row, UTF-8) and validate it against spec."""
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        raise TableError(f"data file not found: {path}")
    except Exception as exc:
        raise TableError(f"cannot parse CSV {path}: {exc}") from exc
    return validate_table(frame, spec)
