import datetime as dt
import math
import random

import numpy as np
import pytest

from avm.comparables import (
    ComparableAd,
    ComparableConfig,
    ComparableCorpus,
    ComparableQuery,
    dump_corpus,
    find_comparables,
    load_corpus,
)
from avm.errors import InvariantViolationError, ParseError
from avm.geo import GeoPoint, destination_point, haversine_distance

CENTER = GeoPoint(45.07, 7.68)
DAY = dt.date(2015, 1, 1)
LEVELS = ("low", "medium", "high")


def ad(dist, bearing=0.0, surface=80.0, price=200_000.0, floor=1, maint="medium", date=DAY, kind="advert"):
    return ComparableAd(destination_point(CENTER, bearing, dist), surface, price, floor, maint, date, kind)


def query(**kw):
    base = dict(target_location=CENTER, target_surface=80.0, target_floor=1, target_maintenance="medium", as_of=dt.date(2016, 1, 1), max_results=5)
    base.update(kw)
    return ComparableQuery(**base)


def staged_oracle(ads, q, cfg=ComparableConfig()):
    """Step-by-step rendition of the staged narrowing, one ad at a time."""
    m = q.max_results
    rows = []
    for i, a in enumerate(ads):
        if a.listed_date <= q.as_of:
            rows.append((i, haversine_distance(q.target_location, a.location), a))

    def within(r):
        return [row for row in rows if row[1] <= r]

    radius = q.initial_radius
    cands = within(radius)
    while not cands:
        if radius * cfg.expand_factor > q.initial_radius * cfg.max_expansion * (1 + 1e-12):
            return [], radius
        radius *= cfg.expand_factor
        cands = within(radius)
    while len(cands) > cfg.overshoot_factor * m:
        smaller = radius * cfg.shrink_factor
        if smaller < cfg.min_radius or len(within(smaller)) < m:
            break
        radius = smaller
        cands = within(radius)
    tests = [
        lambda a: abs(a.floor - q.target_floor) <= cfg.floor_tolerance,
        lambda a: a.maintenance == q.target_maintenance,
        lambda a: abs(a.surface - q.target_surface) <= cfg.surface_tolerance * q.target_surface,
    ]
    for t in tests:
        if len(cands) <= m:
            break
        kept = [row for row in cands if t(row[2])]
        if kept:
            cands = kept
    cands.sort(key=lambda row: (row[1], abs(row[2].surface - q.target_surface), row[0]))
    return [row[0] for row in cands[:m]], radius


def test_invariants():
    with pytest.raises(ValueError, match="surface"):
        ad(10, surface=0)
    with pytest.raises(ValueError, match="price"):
        ad(10, price=-1)
    with pytest.raises(ValueError):
        ad(10, maint="great")
    with pytest.raises(ValueError):
        query(max_results=0)
    with pytest.raises(ValueError):
        query(initial_radius=0)


def test_load_ten(tmp_path):
    path = tmp_path / "ads.csv"
    dump_corpus([ad(50 * i, kind="prior_appraisal" if i % 3 == 0 else "advert") for i in range(10)], path)
    corpus = load_corpus(path)
    assert len(corpus) == 10
    assert sum(a.source_kind == "prior_appraisal" for a in corpus) == 4


def test_load_surface_zero_names_line(tmp_path):
    path = tmp_path / "ads.csv"
    dump_corpus([ad(10), ad(20)], path)
    lines = path.read_text().splitlines()
    parts = lines[2].split(",")
    parts[2] = "0"
    lines[2] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InvariantViolationError, match="line 3"):
        load_corpus(path)


def test_load_parse_error(tmp_path):
    path = tmp_path / "ads.csv"
    path.write_text("latitude,longitude,surface,price,floor,maintenance,listed_date,source_kind\n45,7,80,x,1,low,2015-01-01,advert\n")
    with pytest.raises(ParseError, match="line 2"):
        load_corpus(path)


def test_reload_identical_results(tmp_path):
    rng = random.Random(1)
    path = tmp_path / "ads.csv"
    dump_corpus([ad(rng.uniform(0, 2000), rng.uniform(0, 360), rng.uniform(40, 150), rng.uniform(5e4, 5e5)) for _ in range(60)], path)
    a, b = load_corpus(path), load_corpus(path)
    q = query()
    assert find_comparables(a, q) == find_comparables(b, q)


def test_three_ads_no_narrowing():
    corpus = ComparableCorpus([ad(100, 0), ad(300, 90), ad(900, 180), ad(1500, 0)])
    res = find_comparables(corpus, query())
    assert len(res.selected) == 3
    assert res.final_radius == 1000.0
    assert res.filters_applied == []


def test_average_price():
    corpus = ComparableCorpus([ad(100, surface=100, price=200_000), ad(200, surface=100, price=250_000), ad(300, surface=100, price=300_000)])
    assert find_comparables(corpus, query()).avg_price_per_sqm == 2500.0


def test_empty_then_expansion():
    corpus = ComparableCorpus([ad(3500)])
    res = find_comparables(corpus, query())
    assert len(res.selected) == 1 and res.final_radius == 4000.0
    res = find_comparables(ComparableCorpus([ad(4500)]), query())
    assert res.selected == [] and res.avg_price_per_sqm is None and res.empty


def test_no_temporal_leakage():
    corpus = ComparableCorpus([ad(100, date=dt.date(2016, 6, 1)), ad(200, date=dt.date(2016, 1, 1))])
    res = find_comparables(corpus, query(as_of=dt.date(2016, 1, 1)))
    assert [a.listed_date for a in res.selected] == [dt.date(2016, 1, 1)]


def test_shrinking_and_filters():
    rng = random.Random(8)
    ads = [ad(rng.uniform(0, 1000), rng.uniform(0, 360), rng.uniform(40, 150), 2e5, rng.randint(0, 8), rng.choice(LEVELS)) for _ in range(200)]
    res = find_comparables(ComparableCorpus(ads), query())
    assert res.final_radius < 1000.0
    # filters may leave fewer than max_results, never none
    assert 1 <= len(res.selected) <= 5
    assert res.filters_applied[0] == "floor"
    assert all(abs(a.floor - 1) <= 2 for a in res.selected)


def test_coincident_ads_terminate():
    corpus = ComparableCorpus([ad(0.0) for _ in range(50)])
    res = find_comparables(corpus, query())
    assert len(res.selected) == 5
    assert res.final_radius >= ComparableConfig().min_radius


def random_corpus(rng, n):
    return [
        ad(
            rng.uniform(0, 2500) if rng.random() < 0.8 else rng.uniform(2500, 5000),
            rng.uniform(0, 360),
            round(rng.uniform(35, 200)),
            round(rng.uniform(3e4, 6e5)),
            rng.randint(-1, 10),
            rng.choice(LEVELS),
            DAY + dt.timedelta(days=rng.randrange(800)),
            rng.choice(("advert", "prior_appraisal")),
        )
        for _ in range(n)
    ]


def test_matches_staged_oracle():
    rng = random.Random(21)
    corpus_ads = random_corpus(rng, 100)
    corpus = ComparableCorpus(corpus_ads)
    for _ in range(50):
        q = query(
            target_location=destination_point(CENTER, rng.uniform(0, 360), rng.uniform(0, 3000)),
            target_surface=rng.uniform(40, 160),
            target_floor=rng.randint(0, 8),
            target_maintenance=rng.choice(LEVELS),
            as_of=DAY + dt.timedelta(days=rng.randrange(900)),
            max_results=rng.choice((1, 3, 6)),
            initial_radius=rng.choice((250.0, 500.0, 1000.0)),
        )
        res = find_comparables(corpus, q)
        expected, radius = staged_oracle(corpus_ads, q)
        assert res.selected == [corpus_ads[i] for i in expected]
        assert res.final_radius == pytest.approx(radius)


def test_result_properties_on_random_queries():
    rng = random.Random(3)
    corpus = ComparableCorpus(random_corpus(rng, 400))
    for _ in range(100):
        q = query(
            target_location=destination_point(CENTER, rng.uniform(0, 360), rng.uniform(0, 3000)),
            as_of=DAY + dt.timedelta(days=rng.randrange(900)),
            max_results=rng.randint(1, 8),
        )
        res = find_comparables(corpus, q)
        assert len(res.selected) <= q.max_results
        for a in res.selected:
            assert a.listed_date <= q.as_of
            assert haversine_distance(q.target_location, a.location) <= res.final_radius * (1 + 1e-12)
        if res.selected:
            ppsqm = [a.price / a.surface for a in res.selected]
            assert min(ppsqm) - 1e-9 <= res.avg_price_per_sqm <= max(ppsqm) + 1e-9
            assert res.avg_price_per_sqm == pytest.approx(math.fsum(ppsqm) / len(ppsqm))
