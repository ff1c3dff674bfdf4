"""Small builders shared by the test modules."""

import datetime as dt

from avm.dataset import AppraisalRecord
from avm.geo import GeoPoint, GeoPolygon
from avm.omi import OmiZone, SemesterId


def record(**kw) -> AppraisalRecord:
    base = dict(
        id="r1",
        construction_year=1970,
        bathrooms=1,
        floor=2,
        surface=80.0,
        elevator=True,
        maintenance="medium",
        installations_quality="medium",
        finishing_quality="medium",
        view="medium",
        energy_class="D",
        registered_use="residential",
        orientation="S",
        location=GeoPoint(45.05, 7.65),
        address="Via Roma 1",
        city_area="Central",
        appraisal_date=dt.date(2016, 3, 10),
        valuation=200_000.0,
        is_complex=False,
    )
    base.update(kw)
    return AppraisalRecord(**base)


def square(lat0, lon0, size):
    return GeoPolygon([(lat0, lon0), (lat0, lon0 + size), (lat0 + size, lon0 + size), (lat0 + size, lon0)])


def square_zone(name, lat0, lon0, size, ranges=None):
    """Square OMI zone; ``ranges`` maps ``(year, half, use)`` to ``(min, max)``."""
    ranges = ranges or {(2016, 1, "residential"): (1200.0, 1800.0)}
    table = {(SemesterId(y, h), u): v for (y, h, u), v in ranges.items()}
    return OmiZone(name, square(lat0, lon0, size), table)


def cleaning_fixture():
    """Twelve records: seven clean ones (some at the rule edges) and one
    failing each selection rule. Returns ``(records, expected_drops)`` where
    ``expected_drops`` maps id to a fragment of the reason."""
    recs = [
        record(id="ok-1"),
        record(id="ok-2", surface=250.0),
        record(id="ok-3", valuation=20_000.0),
        record(id="ok-4", valuation=700_000.0),
        record(id="ok-5", surface=30.0, valuation=45_000.0),
        record(id="ok-6", city_area="Suburbs", floor=-1),
        record(id="ok-7", maintenance="high", elevator=False),
        record(id="office", registered_use="office"),
        record(id="big", surface=260.0),
        record(id="cheap", valuation=19_999.0),
        record(id="dear", valuation=750_000.0),
        record(id="complex", is_complex=True),
    ]
    expected = {
        "office": "not residential",
        "big": "> 250",
        "cheap": "< 20000",
        "dear": "> 700000",
        "complex": "complex",
    }
    return recs, expected
