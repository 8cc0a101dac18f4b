"""State-by-year panel table: ingestion, validation, interpolation, integration.

The canonical on-disk form is a UTF-8 CSV with header
``state,year,diabetes_pct,<predictor names>``, rows sorted by (year, state),
``.`` decimals and no thousands separators. Floats are written with ``repr``
so a write/load round trip is bit-for-bit exact.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .schema import (
    CATEGORY_COUNTS,
    FeatureSpec,
    TARGET_FEATURE,
    canonical_features,
    currency_features,
)


class PanelError(ValueError):
    """Base class for panel construction and validation failures."""


class SchemaError(PanelError):
    """Header/column structure does not match the expected schema."""


class ValidationError(PanelError):
    """Cell-level problem: non-numeric, duplicate, out of range, missing."""


class InterpolationError(PanelError):
    """Series cannot be interpolated to the requested years."""


class IntegrationError(PanelError):
    """Source tables cannot be combined into one panel."""


@dataclass(frozen=True)
class PanelTable:
    """Immutable dense year-by-state-by-feature array with its axis labels.

    ``values[i, j, k]`` is feature ``features[k]`` for ``states[j]`` in
    ``years[i]``. The first feature is the prediction target. Years are
    strictly increasing and contiguous; states are sorted.
    """

    states: tuple[str, ...]
    years: tuple[int, ...]
    features: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = (len(self.years), len(self.states), len(self.features))
        if values.shape != expected:
            raise PanelError(f"values shape {values.shape} != {expected}")
        if len(self.states) != len(set(self.states)):
            raise PanelError("duplicate state identifiers")
        if tuple(sorted(self.states)) != tuple(self.states):
            raise PanelError("states must be sorted ascending")
        if any(b - a != 1 for a, b in zip(self.years, self.years[1:])):
            raise PanelError("years must be strictly increasing and contiguous")
        if not self.features or self.features[0] != TARGET_FEATURE:
            raise SchemaError(f"first feature must be {TARGET_FEATURE!r}")
        if len(self.features) != len(set(self.features)):
            raise SchemaError("duplicate feature names")
        if not np.all(np.isfinite(values)):
            raise ValidationError("panel contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return len(self.years) * len(self.states)

    def year_index(self, year: int) -> int:
        try:
            return self.years.index(year)
        except ValueError:
            raise PanelError(f"year {year} not in panel") from None

    def feature_index(self, name: str) -> int:
        try:
            return self.features.index(name)
        except ValueError:
            raise SchemaError(f"feature {name!r} not in panel") from None

    def target(self) -> np.ndarray:
        """Target values as a (n_years, n_states) view."""
        return self.values[:, :, 0]


@dataclass(frozen=True)
class SourceSeries:
    """One (state, feature) time series, possibly with missing years."""

    key: tuple[str, str]
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        years = [y for y, _ in self.points]
        if len(years) != len(set(years)):
            raise ValidationError(f"series {self.key}: duplicate years")
        object.__setattr__(
            self, "points", tuple(sorted(self.points, key=lambda p: p[0]))
        )


@dataclass(frozen=True)
class SourceTable:
    """One source dataset covering a subset of schema features.

    ``points`` maps (state, feature) to its observed (year, value) pairs;
    years may be sparse and are filled by interpolation during integration.
    """

    name: str
    features: tuple[str, ...]
    points: dict = field(default_factory=dict)

    def states(self) -> tuple[str, ...]:
        return tuple(sorted({state for state, _ in self.points}))


def validate_percent_range(table: PanelTable, schema: tuple[FeatureSpec, ...] | None = None) -> None:
    """Check that every percentage-unit feature lies in [0, 100]."""
    exempt = currency_features(schema) if schema else currency_features()
    for k, name in enumerate(table.features):
        if name in exempt:
            continue
        col = table.values[:, :, k]
        bad = np.argwhere((col < 0.0) | (col > 100.0))
        if bad.size:
            i, j = bad[0]
            raise ValidationError(
                f"feature {name!r} out of [0, 100] for state {table.states[j]} "
                f"year {table.years[i]}: {col[i, j]!r}"
            )


def validate_schema_strict(table: PanelTable, schema: tuple[FeatureSpec, ...] | None = None) -> None:
    specs = canonical_features() if schema is None else schema
    expected = tuple(s.name for s in specs)
    if table.features != expected:
        missing = [n for n in expected if n not in table.features]
        extra = [n for n in table.features if n not in expected]
        raise SchemaError(
            f"schema-strict panel must carry exactly the {len(expected)} canonical "
            f"features in order (missing: {missing[:5]}, unexpected: {extra[:5]})"
        )
    if len(table.states) != 51:
        raise SchemaError(f"schema-strict panel requires 51 states, got {len(table.states)}")


def load_panel(path: str | Path, schema_strict: bool = False,
               schema: tuple[FeatureSpec, ...] | None = None) -> PanelTable:
    """Read and validate a panel CSV.

    Raises SchemaError for missing/misordered columns, ValidationError for
    non-numeric cells, duplicate (state, year) rows, incomplete grids, or
    out-of-range percentages.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    if header[:2] != ["state", "year"]:
        raise SchemaError(f"{path}: header must start with 'state,year', got {header[:2]}")
    features = tuple(header[2:])
    if TARGET_FEATURE not in features:
        raise SchemaError(f"{path}: missing required column {TARGET_FEATURE!r}")
    if features[0] != TARGET_FEATURE:
        raise SchemaError(f"{path}: {TARGET_FEATURE!r} must be the first feature column")

    cells: dict[tuple[str, int], list[float]] = {}
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 2 + len(features):
            raise ValidationError(f"{path}:{lineno}: expected {2 + len(features)} fields, got {len(row)}")
        state = row[0]
        try:
            year = int(row[1])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-integer year {row[1]!r}") from None
        try:
            vals = [float(v) for v in row[2:]]
        except ValueError:
            bad = next(v for v in row[2:] if not _is_float(v))
            raise ValidationError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
        if (state, year) in cells:
            raise ValidationError(f"{path}:{lineno}: duplicate (state, year) = ({state}, {year})")
        cells[(state, year)] = vals

    if not cells:
        raise ValidationError(f"{path}: no data rows")
    states = tuple(sorted({s for s, _ in cells}))
    years = tuple(sorted({y for _, y in cells}))
    missing = [(s, y) for y in years for s in states if (s, y) not in cells]
    if missing:
        raise ValidationError(f"{path}: incomplete grid, missing rows for {missing[:5]}")

    values = np.empty((len(years), len(states), len(features)))
    for i, y in enumerate(years):
        for j, s in enumerate(states):
            values[i, j, :] = cells[(s, y)]

    table = PanelTable(states=states, years=years, features=features, values=values)
    validate_percent_range(table, schema)
    if schema_strict:
        validate_schema_strict(table, schema)
    return table


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def write_panel(table: PanelTable, path: str | Path) -> None:
    """Write the canonical CSV: rows sorted by (year, state), repr floats."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state", "year"] + list(table.features))
        for i, year in enumerate(table.years):
            for j, state in enumerate(table.states):
                writer.writerow([state, year] + [repr(float(v)) for v in table.values[i, j, :]])


def interpolate_series(series: SourceSeries, target_years: list[int] | tuple[int, ...]) -> SourceSeries:
    """Fill target years by linear interpolation between known points.

    Known values are preserved exactly. At most one year beyond either end
    of the known hull is filled, by extending the boundary segment's line;
    anything farther raises InterpolationError.
    """
    if len(series.points) < 2:
        raise InterpolationError(
            f"series {series.key}: need at least 2 known points, have {len(series.points)}"
        )
    known = dict(series.points)
    years = [y for y, _ in series.points]
    lo, hi = years[0], years[-1]

    out = []
    for t in sorted(target_years):
        if t in known:
            out.append((t, known[t]))
            continue
        if t < lo - 1 or t > hi + 1:
            raise InterpolationError(
                f"series {series.key}: year {t} is more than one step outside "
                f"known hull [{lo}, {hi}]"
            )
        if t < lo:
            (t0, v0), (t1, v1) = series.points[0], series.points[1]
        elif t > hi:
            (t0, v0), (t1, v1) = series.points[-2], series.points[-1]
        else:
            idx = next(i for i in range(len(years) - 1) if years[i] < t < years[i + 1])
            (t0, v0), (t1, v1) = series.points[idx], series.points[idx + 1]
        value = v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        out.append((t, value))
    return SourceSeries(key=series.key, points=tuple(out))


def integrate(sources: list[SourceTable], years: list[int] | tuple[int, ...] | None = None,
              schema: tuple[FeatureSpec, ...] | None = None) -> PanelTable:
    """Combine per-category source tables into one panel.

    Every source must cover the same state set; the union of source features
    must supply each schema category's expected feature count. Missing years
    are filled per series by interpolate_series.
    """
    if not sources:
        raise IntegrationError("no source tables given")
    specs = canonical_features() if schema is None else schema
    category = {s.name: s.category for s in specs}
    order = {s.name: i for i, s in enumerate(specs)}

    state_sets = [set(src.states()) for src in sources]
    union = set.union(*state_sets)
    inter = set.intersection(*state_sets)
    if union != inter:
        raise IntegrationError(
            f"sources disagree on state set; symmetric difference: {sorted(union - inter)}"
        )
    states = tuple(sorted(union))

    seen: dict[str, str] = {}
    for src in sources:
        for name in src.features:
            if name not in category:
                raise SchemaError(f"source {src.name!r}: unknown feature {name!r}")
            if name in seen:
                raise IntegrationError(
                    f"feature {name!r} supplied by both {seen[name]!r} and {src.name!r}"
                )
            seen[name] = src.name
    counts: dict[str, int] = {}
    for name in seen:
        counts[category[name]] = counts.get(category[name], 0) + 1
    expected = {c: n for c, n in CATEGORY_COUNTS.items()}
    if counts != expected:
        diffs = {c: (counts.get(c, 0), expected.get(c, 0))
                 for c in sorted(set(counts) | set(expected))
                 if counts.get(c, 0) != expected.get(c, 0)}
        raise IntegrationError(f"category feature counts do not match schema (got, want): {diffs}")

    if years is None:
        observed = sorted({y for src in sources for pts in src.points.values() for y, _ in pts})
        years = list(range(observed[0], observed[-1] + 1))
    years = tuple(sorted(years))

    names = sorted(seen, key=order.__getitem__)
    values = np.empty((len(years), len(states), len(names)))
    for src in sources:
        for name in src.features:
            k = names.index(name)
            for j, state in enumerate(states):
                pts = src.points.get((state, name))
                if not pts:
                    raise IntegrationError(f"source {src.name!r}: no data for ({state}, {name})")
                filled = interpolate_series(SourceSeries((state, name), tuple(pts)), years)
                values[:, j, k] = [v for _, v in filled.points]

    table = PanelTable(states=states, years=years, features=tuple(names), values=values)
    validate_percent_range(table, specs)
    return table
