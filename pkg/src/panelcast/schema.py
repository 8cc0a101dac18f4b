"""Canonical feature schema for the state-by-year panel.

The panel carries 90 columns: one target (diagnosed-diabetes prevalence)
plus 89 predictors grouped into six categories. Every feature is a
percentage except per-capita income, which is kept in raw currency units
(normalization downstream makes the units immaterial).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

SCHEMA_VERSION = "panel-schema v1"

TARGET_FEATURE = "diabetes_pct"

PERCENT = "percent"
CURRENCY = "currency"

# Expected feature count per category for a schema-strict panel.
CATEGORY_COUNTS = {
    "diabetes": 1,
    "age": 4,
    "race": 5,
    "gender": 3,
    "house": 3,
    "economy": 3,
    "chronic": 71,
}


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    category: str
    unit: str


def _chronic_names() -> list[str]:
    named = [
        "cdi_asthma_pct",
        "cdi_arthritis_pct",
        "cdi_kidney_disease_pct",
        "cdi_high_cholesterol_pct",
        "cdi_smoking_pct",
        "cdi_foot_exam_pct",
        "cdi_eye_exam_pct",
        "cdi_hba1c_test_pct",
    ]
    numbered = [f"cdi_{i:02d}_pct" for i in range(9, 72)]
    return named + numbered


def canonical_features() -> tuple[FeatureSpec, ...]:
    """The 90 canonical features in on-disk column order (target first)."""
    specs = [FeatureSpec(TARGET_FEATURE, "diabetes", PERCENT)]
    specs += [
        FeatureSpec("age_0_19_pct", "age", PERCENT),
        FeatureSpec("age_20_39_pct", "age", PERCENT),
        FeatureSpec("age_40_59_pct", "age", PERCENT),
        FeatureSpec("age_60_plus_pct", "age", PERCENT),
    ]
    specs += [
        FeatureSpec("hispanic_pct", "race", PERCENT),
        FeatureSpec("nh_white_pct", "race", PERCENT),
        FeatureSpec("nh_asian_pacific_pct", "race", PERCENT),
        FeatureSpec("nh_amer_indian_alaska_pct", "race", PERCENT),
        FeatureSpec("nh_black_pct", "race", PERCENT),
    ]
    specs += [
        FeatureSpec("male_pct", "gender", PERCENT),
        FeatureSpec("female_pct", "gender", PERCENT),
        FeatureSpec("population_share_pct", "gender", PERCENT),
    ]
    specs += [
        FeatureSpec("houses_total_pct", "house", PERCENT),
        FeatureSpec("houses_vacant_pct", "house", PERCENT),
        FeatureSpec("houses_occupied_pct", "house", PERCENT),
    ]
    specs += [
        FeatureSpec("employed_pct", "economy", PERCENT),
        FeatureSpec("per_capita_income", "economy", CURRENCY),
        FeatureSpec("poverty_pct", "economy", PERCENT),
    ]
    specs += [FeatureSpec(name, "chronic", PERCENT) for name in _chronic_names()]
    return tuple(specs)


def canonical_feature_names() -> tuple[str, ...]:
    return tuple(s.name for s in canonical_features())


def currency_features(specs: tuple[FeatureSpec, ...] | None = None) -> frozenset[str]:
    specs = canonical_features() if specs is None else specs
    return frozenset(s.name for s in specs if s.unit == CURRENCY)


def category_of(specs: tuple[FeatureSpec, ...] | None = None) -> dict[str, str]:
    specs = canonical_features() if specs is None else specs
    return {s.name: s.category for s in specs}


def write_manifest(specs: tuple[FeatureSpec, ...], path: str | Path) -> None:
    """Write the versioned schema manifest (one `name,category,unit` line per feature)."""
    lines = [f"# {SCHEMA_VERSION}"]
    lines += [f"{s.name},{s.category},{s.unit}" for s in specs]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> tuple[FeatureSpec, ...]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != f"# {SCHEMA_VERSION}":
        raise ValueError(f"unrecognized schema manifest version header in {path}")
    specs = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValueError(f"malformed manifest line: {ln!r}")
        name, category, unit = parts
        if unit not in (PERCENT, CURRENCY):
            raise ValueError(f"unknown unit tag {unit!r} for feature {name!r}")
        specs.append(FeatureSpec(name, category, unit))
    return tuple(specs)
