"""Tabular data ingestion and preparation.

Everything is parsed as float64, ordinal codes included; categorical codings
are carried as labeling metadata only. Datasets are immutable after load and
safe to share across threads.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyAfterFiltering,
    EmptyColumn,
    EmptyDataset,
    InvalidConfig,
    InvalidPredicate,
    MissingColumn,
    ParseError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    """Columnar table of reals. Columns share one length; names are unique."""

    columns: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.columns:
            raise EmptyDataset("dataset needs at least one column")
        lengths = set()
        frozen: dict[str, np.ndarray] = {}
        for name, values in self.columns.items():
            if not name:
                raise InvalidConfig("column names must be nonempty")
            arr = np.asarray(values, dtype=np.float64)
            if arr.ndim != 1:
                raise InvalidConfig(f"column {name!r} must be one-dimensional")
            arr = arr.copy()
            arr.setflags(write=False)
            frozen[name] = arr
            lengths.add(arr.shape[0])
        if len(lengths) != 1:
            raise InvalidConfig(f"columns have unequal lengths: {sorted(lengths)}")
        object.__setattr__(self, "columns", frozen)

    @property
    def n_rows(self) -> int:
        return next(iter(self.columns.values())).shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.columns)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumn(name) from None

    def row_bindings(self, index: int) -> dict[str, float]:
        """A single row as {name: value}, for scalar evaluation."""
        return {name: float(col[index]) for name, col in self.columns.items()}

    def take(self, mask: np.ndarray) -> "Dataset":
        return Dataset({name: col[mask] for name, col in self.columns.items()})

    def to_csv(self, path) -> None:
        """Write all columns; floats rendered via repr so reloads round-trip."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.names)
            cols = [self.columns[name] for name in self.names]
            for i in range(self.n_rows):
                writer.writerow([_format_cell(col[i]) for col in cols])


def _format_cell(value: float) -> str:
    value = float(value)
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class RoleConfig:
    """Assignment of dataset columns to modeling roles."""

    response: str
    predictors: tuple[str, ...]
    categorical_codings: Mapping[str, Sequence[tuple[float, str]]] = field(
        default_factory=dict
    )

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if not self.response:
            raise InvalidConfig("response name must be nonempty")
        if not self.predictors:
            raise InvalidConfig("at least one predictor is required")
        if self.response in self.predictors:
            raise InvalidConfig(f"response {self.response!r} cannot also be a predictor")
        if len(set(self.predictors)) != len(self.predictors):
            raise InvalidConfig("predictor names must be unique")

    @property
    def selected(self) -> tuple[str, ...]:
        return self.predictors + (self.response,)

    def validate_against(self, data: Dataset) -> None:
        for name in self.selected:
            if name not in data.columns:
                raise MissingColumn(name)


def load_csv(path, role_config: RoleConfig, missing_policy: str = "drop_row") -> Dataset:
    """Read the selected columns of a headered CSV as float64.

    Unparseable or non-finite cells count as missing. drop_row discards the
    affected rows (reported via logging); fail raises ParseError at the first
    offender.
    """
    if missing_policy not in ("drop_row", "fail"):
        raise InvalidConfig(f"unknown missing_policy {missing_policy!r}")

    wanted = role_config.selected
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        positions = {}
        for name in wanted:
            if name not in header:
                raise MissingColumn(name)
            positions[name] = header.index(name)

        kept: list[list[float]] = []
        dropped = 0
        for row_num, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            parsed: list[float] = []
            bad: tuple[str, str] | None = None
            for name in wanted:
                pos = positions[name]
                text = row[pos].strip() if pos < len(row) else ""
                try:
                    value = float(text)
                except ValueError:
                    bad = (name, text)
                    break
                if not math.isfinite(value):
                    bad = (name, text)
                    break
                parsed.append(value)
            if bad is not None:
                if missing_policy == "fail":
                    raise ParseError(row_num, bad[0], bad[1])
                dropped += 1
                continue
            kept.append(parsed)

    if dropped:
        log.warning("%s: dropped %d row(s) with missing or unparseable cells", path, dropped)
    if not kept:
        raise EmptyAfterFiltering(
            f"{path}: no usable rows for columns {', '.join(wanted)}"
        )
    log.info("%s: loaded %d row(s), %d column(s)", path, len(kept), len(wanted))

    matrix = np.asarray(kept, dtype=np.float64)
    return Dataset({name: matrix[:, i] for i, name in enumerate(wanted)})


def summarize(data: Dataset, names: Iterable[str] | None = None) -> dict[str, dict[str, float]]:
    """Per-column min/max/mean/sd/quartiles/n.

    Quartiles use linear interpolation, matching the perturbation-analysis
    baselines. sd is the sample standard deviation; a single observation
    yields 0.0.
    """
    if names is None:
        names = data.names
    out: dict[str, dict[str, float]] = {}
    for name in names:
        col = data.column(name)
        if col.shape[0] == 0:
            raise EmptyColumn(name)
        q1, q2, q3 = np.percentile(col, [25.0, 50.0, 75.0])
        sd = float(np.std(col, ddof=1)) if col.shape[0] > 1 else 0.0
        out[name] = {
            "min": float(np.min(col)),
            "max": float(np.max(col)),
            "mean": float(np.mean(col)),
            "sd": sd,
            "Q1": float(q1),
            "Q2": float(q2),
            "Q3": float(q3),
            "n": int(col.shape[0]),
        }
    return out


_COMPARATORS = {
    "==": lambda col, v: col == v,
    "<=": lambda col, v: col <= v,
    ">=": lambda col, v: col >= v,
}


def filter_rows(data: Dataset, predicate_spec: Sequence) -> Dataset:
    """Keep rows satisfying every clause of an AND-combined predicate list.

    Each clause is [name, op, value] with op one of ==, <=, >=, or range;
    range takes [lo, hi] and keeps lo <= value <= hi. An empty spec keeps
    everything.
    """
    mask = np.ones(data.n_rows, dtype=bool)
    for clause in predicate_spec:
        try:
            name, op, value = clause
        except (TypeError, ValueError):
            raise InvalidPredicate(f"clause must be [name, op, value]: {clause!r}") from None
        col = data.column(str(name))
        if op == "range":
            try:
                lo, hi = value
            except (TypeError, ValueError):
                raise InvalidPredicate(f"range needs [lo, hi]: {value!r}") from None
            mask &= (col >= float(lo)) & (col <= float(hi))
        elif op in _COMPARATORS:
            mask &= _COMPARATORS[op](col, float(value))
        else:
            raise InvalidPredicate(f"unknown comparison {op!r}")
    return data.take(mask)
