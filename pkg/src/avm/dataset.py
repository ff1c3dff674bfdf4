"""Appraisal records: ingestion, cleaning rules and the shuffled split.

Appraisal file: CSV with header containing the :class:`AppraisalRecord`
field names plus ``latitude``/``longitude`` instead of ``location``, and a
boolean ``is_complex`` column. Dates are ISO-8601, ordinals are the literal
strings low/medium/high and booleans are ``true``/``false`` (also accepted:
``1``/``0``, ``yes``/``no``). Columns not in that list are dropped on
ingestion, which is the anonymization step.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import ordinal
from .errors import ParseError, TooFewRecordsError
from .geo import GeoPoint

log = logging.getLogger(__name__)

CITY_AREAS = ("Central", "Near-central", "Larger City Boundary", "Suburbs")

APPRAISAL_COLUMNS = (
    "id",
    "construction_year",
    "bathrooms",
    "floor",
    "surface",
    "elevator",
    "maintenance",
    "installations_quality",
    "finishing_quality",
    "view",
    "energy_class",
    "registered_use",
    "orientation",
    "latitude",
    "longitude",
    "address",
    "city_area",
    "appraisal_date",
    "valuation",
    "is_complex",
)

MIN_VALUATION = 20_000.0
MAX_VALUATION = 700_000.0
MAX_SURFACE = 250.0

__all__ = [
    "CITY_AREAS",
    "APPRAISAL_COLUMNS",
    "AppraisalRecord",
    "SplitSpec",
    "load_appraisals",
    "dump_appraisals",
    "clean",
    "split",
]


@dataclass(frozen=True)
class AppraisalRecord:
    id: str
    construction_year: int
    bathrooms: int
    floor: int
    surface: float
    elevator: bool
    maintenance: str
    installations_quality: str
    finishing_quality: str
    view: str
    energy_class: str
    registered_use: str
    orientation: str
    location: GeoPoint
    address: str
    city_area: str
    appraisal_date: dt.date
    valuation: float
    is_complex: bool = False

    def __post_init__(self):
        if not self.surface > 0:
            raise ValueError("surface > 0 violated")
        if self.bathrooms < 0:
            raise ValueError("bathrooms >= 0 violated")
        if not self.valuation > 0:
            raise ValueError("valuation > 0 violated")
        if self.city_area not in CITY_AREAS:
            raise ValueError(f"city_area must be one of {CITY_AREAS}")
        for f in ("maintenance", "installations_quality", "finishing_quality", "view"):
            ordinal.check_level(getattr(self, f), f)

    def replace(self, **changes) -> "AppraisalRecord":
        return dataclasses.replace(self, **changes)


_TRUE = {"true", "1", "yes", "y"}
_FALSE = {"false", "0", "no", "n", ""}


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _row_to_record(row: dict) -> AppraisalRecord:
    return AppraisalRecord(
        id=row["id"],
        construction_year=int(row["construction_year"]),
        bathrooms=int(row["bathrooms"]),
        floor=int(row["floor"]),
        surface=float(row["surface"]),
        elevator=_bool(row["elevator"]),
        maintenance=row["maintenance"].strip(),
        installations_quality=row["installations_quality"].strip(),
        finishing_quality=row["finishing_quality"].strip(),
        view=row["view"].strip(),
        energy_class=row["energy_class"].strip(),
        registered_use=row["registered_use"].strip(),
        orientation=row["orientation"].strip(),
        location=GeoPoint(float(row["latitude"]), float(row["longitude"])),
        address=row["address"],
        city_area=row["city_area"].strip(),
        appraisal_date=dt.date.fromisoformat(row["appraisal_date"].strip()),
        valuation=float(row["valuation"]),
        is_complex=_bool(row.get("is_complex") or "false"),
    )


def load_appraisals(path) -> list[AppraisalRecord]:
    """Read an appraisal file.

    Rows violating record invariants are rejected and logged with the
    reason; malformed rows (unparseable numbers or dates) raise
    :class:`ParseError` with the line number.
    """
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = [c for c in APPRAISAL_COLUMNS if c != "is_complex"]
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            row = {k: v for k, v in row.items() if k in APPRAISAL_COLUMNS}
            try:
                rec = _row_to_record(row)
            except ValueError as exc:
                msg = str(exc)
                if "violated" in msg or "must be one of" in msg:
                    log.warning("rejected %s line %d (id=%s): %s", path.name, lineno, row.get("id"), msg)
                    continue
                raise ParseError(f"{path}: line {lineno}: {msg}") from exc
            except (TypeError, AttributeError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            records.append(rec)
    log.info("loaded %d appraisals from %s", len(records), path)
    return records


def dump_appraisals(records: Iterable[AppraisalRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(APPRAISAL_COLUMNS)
        for r in records:
            w.writerow(
                [
                    r.id,
                    r.construction_year,
                    r.bathrooms,
                    r.floor,
                    repr(float(r.surface)),
                    "true" if r.elevator else "false",
                    r.maintenance,
                    r.installations_quality,
                    r.finishing_quality,
                    r.view,
                    r.energy_class,
                    r.registered_use,
                    r.orientation,
                    repr(float(r.location.latitude)),
                    repr(float(r.location.longitude)),
                    r.address,
                    r.city_area,
                    r.appraisal_date.isoformat(),
                    repr(float(r.valuation)),
                    "true" if r.is_complex else "false",
                ]
            )


def _drop_reason(r: AppraisalRecord) -> str | None:
    if r.registered_use != "residential":
        return f"registered_use {r.registered_use!r} is not residential"
    if r.surface > MAX_SURFACE:
        return f"surface {r.surface:g} m2 > {MAX_SURFACE:g}"
    if r.valuation < MIN_VALUATION:
        return f"valuation {r.valuation:g} < {MIN_VALUATION:g}"
    if r.valuation > MAX_VALUATION:
        return f"valuation {r.valuation:g} > {MAX_VALUATION:g}"
    if r.is_complex:
        return "complex property"
    return None


def clean(records: Sequence[AppraisalRecord]):
    """Apply the selection rules.

    Returns ``(kept, dropped)`` where ``dropped`` is a list of
    ``(record, reason)``; the first failing rule gives the reason.
    """
    kept, dropped = [], []
    for r in records:
        reason = _drop_reason(r)
        if reason is None:
            kept.append(r)
        else:
            log.info("dropped %s: %s", r.id, reason)
            dropped.append((r, reason))
    return kept, dropped


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    validation_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.validation_fraction, self.test_fraction)
        if any(f <= 0 for f in fr):
            raise ValueError("split fractions must be positive")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def split(records: Sequence, spec: SplitSpec = SplitSpec()):
    """Shuffle with ``numpy.random.default_rng(spec.seed)`` and partition.

    Validation and test sizes are ``floor(fraction * n)``; the training set
    takes the remainder.
    """
    n = len(records)
    if n < 10:
        raise TooFewRecordsError(f"need at least 10 records to split, got {n}")
    n_val = math.floor(spec.validation_fraction * n + 1e-9)
    n_test = math.floor(spec.test_fraction * n + 1e-9)
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = n - n_val - n_test
    train = [records[i] for i in perm[:n_train]]
    val = [records[i] for i in perm[n_train : n_train + n_val]]
    test = [records[i] for i in perm[n_train + n_val :]]
    return train, val, test
