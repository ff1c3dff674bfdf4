import csv
import datetime as dt
import logging

import numpy as np
import pytest

from helpers import record, square_zone

from avm.comparables import ComparableAd, ComparableCorpus
from avm.errors import CoverageError, MissingFeatureError
from avm.features import (
    FeatureConfig,
    FeatureContext,
    FeatureSchema,
    build_schema,
    build_vectors,
    export_matrix,
    poi_column,
    vectorize,
)
from avm.geo import GeoPoint
from avm.omi import OmiZoneStore
from avm.poi import POI_CATEGORIES, PoiEntry, PoiStore

CENTER = GeoPoint(45.005, 7.625)


def zone_ranges(i):
    return {(2015, 2, "residential"): (1000.0 + 100 * i, 1500.0 + 100 * i), (2016, 1, "residential"): (1100.0 + 100 * i, 1600.0 + 100 * i)}


def make_ctx(n_zones=5, config=None):
    zones = [square_zone(f"Z{i}", 45.0, 7.60 + 0.01 * i, 0.01, zone_ranges(i)) for i in range(n_zones)]
    pois = PoiStore([PoiEntry(c, GeoPoint(45.005, 7.605 + 0.002 * k)) for k, c in enumerate(POI_CATEGORIES)])
    ads = [
        ComparableAd(GeoPoint(45.002 + 0.0005 * (k % 10), 7.601 + 0.001 * k), 60.0 + k, 150_000.0 + 2_000 * k, k % 5, "medium", dt.date(2015, 1, 1))
        for k in range(50)
    ]
    return FeatureContext(OmiZoneStore(zones), pois, ComparableCorpus(ads), config or FeatureConfig(CENTER))


def zone_records(n_zones=5, per_zone=4):
    out = []
    for i in range(n_zones):
        for j in range(per_zone):
            out.append(
                record(
                    id=f"z{i}-{j}",
                    location=GeoPoint(45.002 + 0.002 * j, 7.603 + 0.01 * i),
                    surface=50.0 + 10 * j + i,
                    construction_year=1950 + 5 * i + j,
                    floor=j,
                    valuation=100_000.0 + 20_000 * i + 5_000 * j,
                    maintenance=("low", "medium", "high")[j % 3],
                )
            )
    return out


def test_omi_centered_columns():
    ctx = make_ctx()
    s = build_schema("omi_centered", zone_records(), ctx)
    assert s.feature_names == ["omi_min", "omi_max", "surface"]
    s = build_schema("omi_centered_comparables", zone_records(), ctx)
    assert s.feature_names == ["omi_min", "omi_max", "surface", "avg_comparable_price_per_sqm"]


def test_hedonic_zone_one_hot_width():
    ctx = make_ctx()
    s = build_schema("hedonic", zone_records(), ctx)
    assert s.groups["omi_zone"] == ("Z0", "Z1", "Z2", "Z3", "Z4")
    names = s.feature_names
    assert sum(n.startswith("omi_zone=") for n in names) == 5
    assert all(poi_column(c) in names for c in POI_CATEGORIES)
    assert "distance_to_center" in names
    assert len(set(names)) == len(names)
    assert "omi_min" not in names


def test_hedonic_with_omi_values():
    ctx = make_ctx(config=FeatureConfig(CENTER, include_omi_values=True))
    names = build_schema("hedonic", zone_records(), ctx).feature_names
    assert "omi_min" in names and "omi_max" in names


def test_scaling_endpoints_and_clamp():
    ctx = make_ctx()
    recs = zone_records()
    s = build_schema("hedonic", recs, ctx)
    col = s.feature_names.index("construction_year")
    years = [r.construction_year for r in recs]
    lo = min(recs, key=lambda r: r.construction_year)
    hi = max(recs, key=lambda r: r.construction_year)
    assert vectorize(s, lo, ctx).values[col] == -1.0
    assert vectorize(s, hi, ctx).values[col] == 1.0
    beyond = hi.replace(construction_year=max(years) + 50)
    assert vectorize(s, beyond, ctx).values[col] == 1.0
    mid = lo.replace(construction_year=(min(years) + max(years)) / 2)
    assert vectorize(s, mid, ctx).values[col] == pytest.approx(0.0)


def test_ordinals_and_booleans():
    ctx = make_ctx()
    s = build_schema("hedonic", zone_records(), ctx)
    names = s.feature_names
    v = vectorize(s, zone_records()[1], ctx).values  # maintenance medium
    assert v[names.index("maintenance")] == 0.0
    v = vectorize(s, zone_records()[0].replace(maintenance="high", elevator=False), ctx).values
    assert v[names.index("maintenance")] == 1.0
    assert v[names.index("elevator")] == -1.0


def test_values_finite_and_in_range():
    ctx = make_ctx()
    s = build_schema("hedonic", zone_records(), ctx)
    for r in zone_records():
        v = vectorize(s, r, ctx)
        assert v.values.shape == (s.width,)
        assert np.all(np.isfinite(v.values))
        assert np.all(np.abs(v.values) <= 1.0)
        assert v.target == r.valuation


def test_vectors_are_read_only():
    ctx = make_ctx()
    s = build_schema("omi_centered", zone_records(), ctx)
    v = vectorize(s, zone_records()[0], ctx)
    with pytest.raises(ValueError):
        v.values[0] = 3.0


def test_unseen_zone_gives_zero_one_hot(caplog):
    ctx = make_ctx()
    train = [r for r in zone_records() if not r.id.startswith("z4")]
    s = build_schema("hedonic", train, ctx)
    assert "Z4" not in s.groups["omi_zone"]
    foreign = [r for r in zone_records() if r.id.startswith("z4")][0]
    with caplog.at_level(logging.WARNING):
        v = vectorize(s, foreign, ctx)
    zone_cols = [i for i, n in enumerate(s.feature_names) if n.startswith("omi_zone=")]
    assert np.all(v.values[zone_cols] == 0.0)
    assert "unseen" in caplog.text


def test_coverage_error():
    ctx = make_ctx()
    recs = zone_records() + [record(id="lost", location=GeoPoint(44.0, 7.0))]
    with pytest.raises(CoverageError):
        build_schema("omi_centered", recs, ctx)


def test_missing_quote_is_skipped():
    ctx = make_ctx()
    s = build_schema("omi_centered", zone_records(), ctx)
    old = zone_records()[0].replace(id="old", appraisal_date=dt.date(2014, 1, 1))
    with pytest.raises(MissingFeatureError):
        vectorize(s, old, ctx)
    vecs, skipped = build_vectors(s, [zone_records()[0], old], ctx)
    assert len(vecs) == 1 and skipped[0][0] == "old"


def test_standardization_depends_on_train_only():
    ctx = make_ctx()
    recs = zone_records()
    s1 = build_schema("hedonic", recs[:12], ctx)
    s2 = build_schema("hedonic", recs[:12], ctx)
    build_vectors(s1, recs[12:], ctx)
    assert s1.standardization == s2.standardization
    assert s1.fingerprint == s2.fingerprint


def test_omi_centered_depends_only_on_location_date_surface():
    ctx = make_ctx()
    s = build_schema("omi_centered", zone_records(), ctx)
    r = zone_records()[3]
    base = vectorize(s, r, ctx, with_target=False).values
    mutated = r.replace(
        id="other",
        construction_year=1900,
        bathrooms=4,
        floor=9,
        elevator=False,
        maintenance="low",
        installations_quality="high",
        finishing_quality="low",
        view="high",
        energy_class="A",
        registered_use="office",
        orientation="N",
        address="elsewhere",
        city_area="Suburbs",
        valuation=1.0,
        is_complex=True,
    )
    assert np.array_equal(vectorize(s, mutated, ctx, with_target=False).values, base)
    assert not np.array_equal(vectorize(s, r.replace(surface=r.surface + 5), ctx).values, base)


def test_deterministic():
    a, b = make_ctx(), make_ctx()
    recs = zone_records()
    sa = build_schema("omi_centered_comparables", recs, a)
    sb = build_schema("omi_centered_comparables", recs, b)
    assert sa == sb
    for r in recs:
        assert np.array_equal(vectorize(sa, r, a).values, vectorize(sb, r, b).values)


def test_per_sqm_target():
    ctx = make_ctx(config=FeatureConfig(CENTER, target_per_sqm=True))
    s = build_schema("omi_centered", zone_records(), ctx)
    r = zone_records()[0]
    v = vectorize(s, r, ctx)
    assert v.target * v.target_scale == pytest.approx(r.valuation)
    assert v.target_scale == r.surface


def test_schema_and_config_round_trip():
    ctx = make_ctx()
    s = build_schema("hedonic", zone_records(), ctx)
    again = FeatureSchema.from_dict(s.to_dict())
    assert again == s and again.fingerprint == s.fingerprint
    cfg = FeatureConfig(CENTER, include_omi_values=True, max_comparables=4)
    assert FeatureConfig.from_dict(cfg.to_dict()) == cfg


def test_export_matrix(tmp_path):
    ctx = make_ctx()
    recs = zone_records()
    s = build_schema("omi_centered_comparables", recs, ctx)
    vecs, _ = build_vectors(s, recs, ctx)
    path = tmp_path / "m.csv"
    export_matrix(vecs, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["id", *s.feature_names, "target"]
    assert len(rows) == len(vecs) + 1
    assert np.allclose([float(x) for x in rows[1][1:-1]], vecs[0].values)
