import csv
import dataclasses
import datetime as dt
import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import cleaning_fixture, record

from avm.dataset import (
    APPRAISAL_COLUMNS,
    MAX_VALUATION,
    MIN_VALUATION,
    SplitSpec,
    clean,
    dump_appraisals,
    load_appraisals,
    split,
)
from avm.errors import ParseError, TooFewRecordsError


def write_rows(path, records):
    dump_appraisals(records, path)
    return path


def test_record_invariants():
    with pytest.raises(ValueError, match="surface > 0 violated"):
        record(surface=-5.0)
    with pytest.raises(ValueError):
        record(valuation=0.0)
    with pytest.raises(ValueError):
        record(bathrooms=-1)
    with pytest.raises(ValueError):
        record(city_area="Downtown")
    with pytest.raises(ValueError):
        record(maintenance="excellent")


def test_load_twenty(tmp_path):
    recs = [record(id=f"r{i}", surface=50.0 + i) for i in range(20)]
    loaded = load_appraisals(write_rows(tmp_path / "a.csv", recs))
    assert loaded == recs


def test_negative_surface_rejected_with_reason(tmp_path, caplog):
    path = write_rows(tmp_path / "a.csv", [record(id="good"), record(id="bad")])
    text = path.read_text().replace("bad,1970,1,2,80.0", "bad,1970,1,2,-80.0")
    path.write_text(text)
    with caplog.at_level(logging.WARNING):
        loaded = load_appraisals(path)
    assert [r.id for r in loaded] == ["good"]
    assert "surface > 0 violated" in caplog.text
    assert "bad" in caplog.text


def test_missing_valuation_column(tmp_path):
    path = tmp_path / "a.csv"
    cols = [c for c in APPRAISAL_COLUMNS if c != "valuation"]
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerow(cols)
    with pytest.raises(ParseError, match="valuation"):
        load_appraisals(path)


def test_unparseable_row_is_parse_error(tmp_path):
    path = write_rows(tmp_path / "a.csv", [record(id="x")])
    path.write_text(path.read_text().replace("2016-03-10", "10/03/2016"))
    with pytest.raises(ParseError, match="line 2"):
        load_appraisals(path)


def test_is_complex_column_optional(tmp_path):
    path = write_rows(tmp_path / "a.csv", [record(id="x")])
    lines = path.read_text().splitlines()
    stripped = [",".join(l.split(",")[:-1]) for l in lines]
    path.write_text("\n".join(stripped) + "\n")
    assert load_appraisals(path)[0].is_complex is False


def test_extra_columns_are_ignored(tmp_path):
    path = write_rows(tmp_path / "a.csv", [record(id="x")])
    lines = path.read_text().splitlines()
    path.write_text("\n".join([lines[0] + ",owner_name", lines[1] + ",Mario Rossi"]) + "\n")
    assert load_appraisals(path)[0] == record(id="x")


@pytest.mark.parametrize(
    "changes",
    [{"registered_use": "office"}, {"surface": 260.0}, {"valuation": 750_000.0}, {"valuation": 15_000.0}, {"is_complex": True}],
)
def test_clean_drops(changes):
    kept, dropped = clean([record(**changes)])
    assert kept == [] and len(dropped) == 1


def test_clean_fixture():
    recs, expected = cleaning_fixture()
    kept, dropped = clean(recs)
    assert len(kept) == 7
    assert {r.id: reason for r, reason in dropped}.keys() == expected.keys()
    for r, reason in dropped:
        assert expected[r.id] in reason


values = st.floats(1_000, 1_000_000)
surfaces = st.floats(10, 400)


@given(st.lists(st.tuples(values, surfaces, st.booleans(), st.sampled_from(["residential", "office"])), max_size=30))
def test_clean_properties(rows):
    recs = [record(id=str(i), valuation=v, surface=s, is_complex=c, registered_use=u) for i, (v, s, c, u) in enumerate(rows)]
    kept, dropped = clean(recs)
    assert len(kept) + len(dropped) == len(recs)
    assert clean(kept)[0] == kept
    assert all(MIN_VALUATION <= r.valuation <= MAX_VALUATION for r in kept)


def test_split_sizes():
    recs = [record(id=str(i)) for i in range(100)]
    tr, va, te = split(recs, SplitSpec(seed=1))
    assert (len(tr), len(va), len(te)) == (70, 15, 15)


def test_split_3983():
    recs = list(range(3983))
    tr, va, te = split(recs, SplitSpec(seed=0))
    assert (len(tr), len(va), len(te)) == (2789, 597, 597)


def test_split_deterministic_and_partition():
    recs = list(range(257))
    a = split(recs, SplitSpec(seed=9))
    assert a == split(recs, SplitSpec(seed=9))
    assert a != split(recs, SplitSpec(seed=10))
    assert sorted(a[0] + a[1] + a[2]) == recs


def test_split_too_few():
    with pytest.raises(TooFewRecordsError):
        split(list(range(9)), SplitSpec())


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(0.7, 0.2, 0.2)
    with pytest.raises(ValueError):
        SplitSpec(1.0, 0.0, 0.0)
