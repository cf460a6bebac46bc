"""Domain types, CSV ingestion, and probability-grid construction.

Every type here is immutable after construction and safe to share across
concurrent tasks. Numeric content is stored as Python floats parsed from
decimal text, so re-serialising a dataset reproduces the original values
in decimal round-trip.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInputError,
    InvalidArgumentError,
    InvalidGridError,
    ParseError,
    SchemaError,
)

__all__ = [
    "ObservedRecord",
    "Dataset",
    "ProbabilityGrid",
    "ingest_csv",
    "write_csv",
    "build_grid",
]


@dataclass(frozen=True)
class ObservedRecord:
    """One unit: outcome, binary treatment indicator, covariate vector."""

    outcome: float
    treatment: int
    covariates: tuple[float, ...]

    def __post_init__(self):
        if not math.isfinite(self.outcome):
            raise InvalidArgumentError(f"outcome must be finite, got {self.outcome!r}")
        if self.treatment not in (0, 1):
            raise InvalidArgumentError(
                f"treatment must be 0 or 1, got {self.treatment!r}"
            )
        if any(not math.isfinite(v) for v in self.covariates):
            raise InvalidArgumentError("covariates must all be finite")


@dataclass(frozen=True)
class Dataset:
    """An ordered sample of :class:`ObservedRecord` with named covariates."""

    records: tuple[ObservedRecord, ...]
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.records) < 1:
            raise EmptyInputError("a dataset needs at least one record")
        m = len(self.covariate_names)
        for r in self.records:
            if len(r.covariates) != m:
                raise InvalidArgumentError(
                    f"record has {len(r.covariates)} covariates, expected {m}"
                )
        if len(set(self.covariate_names)) != m:
            raise InvalidArgumentError("covariate names must be unique")

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    @cached_property
    def outcomes(self) -> np.ndarray:
        a = np.array([r.outcome for r in self.records], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def treatments(self) -> np.ndarray:
        a = np.array([r.treatment for r in self.records], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def covariate_matrix(self) -> np.ndarray:
        a = np.array([r.covariates for r in self.records], dtype=float)
        a = a.reshape(self.n, self.n_covariates)
        a.setflags(write=False)
        return a

    @cached_property
    def design_matrix(self) -> np.ndarray:
        """n x (m+1) matrix with columns (1, treatment, covariates)."""
        a = np.column_stack(
            [np.ones(self.n), self.treatments, self.covariate_matrix]
        )
        a.setflags(write=False)
        return a

    @property
    def n_treated(self) -> int:
        return int(sum(r.treatment for r in self.records))

    def select_covariates(self, names: Sequence[str]) -> "Dataset":
        """New dataset keeping only the named covariates, in the given order."""
        missing = [c for c in names if c not in self.covariate_names]
        if missing:
            raise SchemaError(f"unknown covariates: {', '.join(missing)}")
        idx = [self.covariate_names.index(c) for c in names]
        recs = tuple(
            ObservedRecord(r.outcome, r.treatment, tuple(r.covariates[i] for i in idx))
            for r in self.records
        )
        return Dataset(recs, tuple(names))

    def take(self, indices: Iterable[int]) -> "Dataset":
        """New dataset built from rows at ``indices`` (repeats allowed)."""
        recs = tuple(self.records[int(i)] for i in indices)
        return Dataset(recs, self.covariate_names)

    @staticmethod
    def from_arrays(
        outcomes: Sequence[float],
        treatments: Sequence[int],
        covariates: np.ndarray,
        covariate_names: Sequence[str],
    ) -> "Dataset":
        cov = np.asarray(covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(-1, 1)
        recs = tuple(
            ObservedRecord(float(y), int(d), tuple(float(v) for v in row))
            for y, d, row in zip(outcomes, treatments, cov)
        )
        return Dataset(recs, tuple(covariate_names))


@dataclass(frozen=True)
class ProbabilityGrid:
    """Ordered probability levels with interval weights.

    The first ``transition_index`` levels form the bulk segment and the rest
    the extreme segment; ``transition_index`` is the (1-based) position of
    the transition level, i.e. the number of bulk levels. Weight ``j`` is
    ``levels[j] - levels[j-1]`` (with an implicit 0 in front), except that
    the final weight absorbs all mass above the second-to-last level so the
    weights sum to one.
    """

    levels: tuple[float, ...]
    transition_index: int
    weights: tuple[float, ...]

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        J = lv.size
        if J < 2:
            raise InvalidGridError("a grid needs at least two levels")
        if w.size != J:
            raise InvalidGridError("levels and weights must have equal length")
        if not (np.all(lv > 0.0) and np.all(lv < 1.0)):
            raise InvalidGridError("levels must lie strictly inside (0, 1)")
        if np.any(np.diff(lv) <= 0.0):
            raise InvalidGridError("levels must be strictly increasing")
        if not 1 <= self.transition_index < J:
            raise InvalidGridError(
                f"transition_index must be in [1, {J - 1}], got {self.transition_index}"
            )
        if np.any(w < 0.0):
            raise InvalidGridError("weights must be nonnegative")
        expected = np.diff(np.concatenate([[0.0], lv]))
        expected[-1] = 1.0 - lv[-2]
        if not np.allclose(w, expected, rtol=0.0, atol=1e-12):
            raise InvalidGridError("weights do not match the level spacings")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidGridError("weights must sum to one")

    @property
    def transition_level(self) -> float:
        return self.levels[self.transition_index - 1]

    @property
    def bulk_levels(self) -> tuple[float, ...]:
        return self.levels[: self.transition_index]

    @property
    def extreme_levels(self) -> tuple[float, ...]:
        return self.levels[self.transition_index :]

    @property
    def tau_max(self) -> float:
        return self.levels[-1]


def build_grid(
    tau_u: float, bulk_count: int, extreme_count: int, tau_max: float = 0.9995
) -> ProbabilityGrid:
    """Equidistant bulk levels up to ``tau_u`` plus equidistant extreme levels.

    Bulk level ``j`` is ``j * tau_u / bulk_count`` for ``j = 1..bulk_count``;
    extreme level ``j`` is ``tau_u + j * (tau_max - tau_u) / extreme_count``.
    The transition level is the last bulk level, ``tau_u`` itself.
    """
    if bulk_count < 1 or extreme_count < 1:
        raise InvalidGridError("bulk_count and extreme_count must be >= 1")
    if not (0.0 < tau_u < tau_max < 1.0):
        raise InvalidGridError(
            f"need 0 < tau_u < tau_max < 1, got tau_u={tau_u}, tau_max={tau_max}"
        )
    bulk = [j * tau_u / bulk_count for j in range(1, bulk_count + 1)]
    ext = [
        tau_u + j * (tau_max - tau_u) / extreme_count
        for j in range(1, extreme_count + 1)
    ]
    levels = np.array(bulk + ext)
    weights = np.diff(np.concatenate([[0.0], levels]))
    weights[-1] = 1.0 - levels[-2]
    return ProbabilityGrid(
        levels=tuple(float(v) for v in levels),
        transition_index=bulk_count,
        weights=tuple(float(v) for v in weights),
    )


def _parse_number(text: str, what: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"line {line}: {what} value {text!r} is not numeric", line=line
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"line {line}: {what} value {text!r} is not finite", line=line)
    return value


def ingest_csv(
    source,
    outcome_col: str,
    treatment_col: str,
    covariate_cols: Sequence[str],
) -> Dataset:
    """Read a UTF-8 CSV with a header row into a :class:`Dataset`.

    ``source`` may be a filesystem path, a text stream, or a byte stream.
    The named columns must all exist; treatment cells must parse to exactly
    0 or 1; every other named cell must be a finite number. Line numbers in
    parse errors count the header as line 1.
    """
    if hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        stream = io.StringIO(text)
    else:
        stream = open(source, "r", encoding="utf-8", newline="")
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError("input has no header row") from None
        header = [h.strip() for h in header]
        wanted = [outcome_col, treatment_col, *covariate_cols]
        for col in wanted:
            if col not in header:
                raise SchemaError(f"missing column {col!r}")
        if len(set(covariate_cols)) != len(covariate_cols):
            raise SchemaError("covariate columns must be distinct")
        y_ix = header.index(outcome_col)
        d_ix = header.index(treatment_col)
        x_ix = [header.index(c) for c in covariate_cols]

        records = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"line {line}: expected {len(header)} cells", line=line)
            y = _parse_number(row[y_ix].strip(), outcome_col, line)
            d = _parse_number(row[d_ix].strip(), treatment_col, line)
            if d not in (0.0, 1.0):
                raise ParseError(
                    f"line {line}: treatment must be 0 or 1, got {row[d_ix].strip()!r}",
                    line=line,
                )
            covs = tuple(
                _parse_number(row[i].strip(), header[i], line) for i in x_ix
            )
            records.append(ObservedRecord(y, int(d), covs))
        if not records:
            raise EmptyInputError("input has a header but no data rows")
        return Dataset(tuple(records), tuple(covariate_cols))
    finally:
        if not hasattr(source, "read"):
            stream.close()


def write_csv(dataset: Dataset, destination, outcome_col: str = "y",
              treatment_col: str = "d") -> None:
    """Serialise a dataset back to CSV with round-trip-exact decimals."""

    def _write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([outcome_col, treatment_col, *dataset.covariate_names])
        for r in dataset.records:
            writer.writerow([repr(r.outcome), r.treatment, *[repr(v) for v in r.covariates]])

    if hasattr(destination, "write"):
        _write(destination)
    else:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            _write(fh)
