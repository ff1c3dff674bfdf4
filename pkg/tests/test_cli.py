import json
import statistics

import pytest

from avm.cli import main
from avm.dataset import load_appraisals


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    d = tmp_path_factory.mktemp("city")
    assert main(["synth", "--seed", "5", "--n-properties", "500", "--n-zones", "10", "--out", str(d)]) == 0
    return d


@pytest.fixture(scope="module")
def trained(city, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(city), "--out", str(out)]) == 0
    return out


def test_synth_outputs(city):
    for name in ("zones.json", "pois.csv", "adverts.csv", "appraisals.csv", "truth.json", "config.json", "manifest.json"):
        assert (city / name).is_file()
    cfg = json.loads((city / "config.json").read_text())
    assert {"center_lat", "center_lon", "zones"} <= set(cfg)


def test_train_evaluate_on_defaults(city, trained, tmp_path, capsys):
    assert (trained / "model.json").is_file()
    model = json.loads((trained / "model.json").read_text())
    assert model["kind"] == "extra_trees" and model["feature_set"] == "omi_centered_comparables"
    code, out, _ = run(capsys, "evaluate", "--data", city, "--model", trained / "model.json", "--out", tmp_path)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n"] > 0 and abs(report["mse_keur2"] - report["me_keur"] ** 2) <= 1e-9
    assert (tmp_path / "scatter_errors.csv").is_file() and (tmp_path / "scatter_predicted.csv").is_file()
    assert "ME=" in out


def test_train_prints_validation_me(city, tmp_path, capsys):
    code, out, _ = run(capsys, "train", "--data", city, "--out", tmp_path, "--feature-set", "omi", "--learner", "knn", "--grid", "default")
    assert code == 0 and out.startswith("validation ME")
    tuning = json.loads((tmp_path / "tuning.json").read_text())
    assert [row["params"]["k"] for row in tuning] == [1, 3, 5, 10, 20]


def test_train_twice_identical(city, tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps([{"n_trees": 20, "min_samples_leaf": 1}, {"n_trees": 20, "min_samples_leaf": 3}]))
    blobs = []
    for _ in range(2):
        code, _, _ = run(capsys, "train", "--data", city, "--out", tmp_path / "r", "--feature-set", "hedonic", "--learner", "random_forest", "--grid", grid, "--seed", 3)
        assert code == 0
        blobs.append({f: (tmp_path / "r" / f).read_bytes() for f in ("model.json", "tuning.json", "manifest.json")})
    assert blobs[0] == blobs[1]


def test_manifest_contents(trained):
    man = json.loads((trained / "manifest.json").read_text())
    assert man["command"] == "train"
    assert set(man["inputs"]) == {"zones", "pois", "adverts", "appraisals"}
    assert all(len(v["sha256"]) == 64 for v in man["inputs"].values())
    assert man["seeds"] == {"seed": 0, "split_seed": 0}
    assert {"avm", "numpy", "numba", "python"} <= set(man["versions"])
    assert man["options"]["learner"] == "extra_trees"
    assert "time" not in json.dumps(man)


def test_predict_in_training_range(city, trained, tmp_path, capsys):
    recs = load_appraisals(city / "appraisals.csv")
    r = recs[7]
    rec = tmp_path / "rec.json"
    rec.write_text(json.dumps({"surface": r.surface, "latitude": r.location.latitude, "longitude": r.location.longitude, "appraisal_date": r.appraisal_date.isoformat(), "floor": r.floor, "maintenance": r.maintenance}))
    code, out, _ = run(capsys, "predict", "--data", city, "--model", trained / "model.json", "--record", rec)
    assert code == 0
    value = json.loads(out)["valuation"]
    vals = [x.valuation for x in recs]
    assert min(vals) <= value <= max(vals)


def test_importance(trained, capsys):
    code, out, _ = run(capsys, "importance", "--model", trained / "model.json")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 4 and sum(float(l.split()[0]) for l in lines) == pytest.approx(100, abs=1e-2)


def test_config_file_and_override(city, tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"data": str(city), "feature_set": "omi", "learner": "knn", "out": "sub"}))
    code, _, _ = run(capsys, "train", "--config", cfg, "--learner", "linear_baseline")
    assert code == 0
    model = json.loads((tmp_path / "sub" / "model.json").read_text())
    assert model["kind"] == "linear_baseline" and model["feature_set"] == "omi_centered"


def error_of(err):
    return json.loads(err.strip().splitlines()[-1])


def test_configuration_error_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", tmp_path / "missing", "--center-lat", 45, "--center-lon", 7, "--out", tmp_path)
    assert code == 2 and error_of(err)["error"] == "configuration"
    code, _, err = run(capsys, "train", "--config", tmp_path / "nope.json")
    assert code == 2


def test_parse_error_exit_3(city, tmp_path, capsys):
    bad = tmp_path / "appraisals.csv"
    bad.write_text((city / "appraisals.csv").read_text().replace("2016-", "2016/", 1))
    code, _, err = run(capsys, "train", "--data", city, "--appraisals", bad, "--out", tmp_path / "o")
    e = error_of(err)
    assert code == 3 and e["error"] == "parse" and e["stage"] == "ingest"


def test_pipeline_error_exit_4(city, tmp_path, capsys):
    assert run(capsys, "train", "--data", city, "--out", tmp_path, "--learner", "knn", "--feature-set", "omi")[0] == 0
    code, _, err = run(capsys, "importance", "--model", tmp_path / "model.json")
    assert code == 4 and error_of(err)["error"] == "pipeline"


def test_out_of_sample_cli(city, tmp_path, capsys):
    other = tmp_path / "other"
    assert run(capsys, "synth", "--seed", "99", "--n-properties", "200", "--n-zones", "8", "--zone-prefix", "B", "--out", other)[0] == 0
    assert run(capsys, "train", "--data", city, "--out", tmp_path / "m", "--feature-set", "omi", "--learner", "random_forest")[0] == 0
    code, out, _ = run(capsys, "evaluate", "--data", other, "--model", tmp_path / "m" / "model.json", "--out-of-sample", "--out", tmp_path / "e")
    assert code == 0 and "out of sample" in out
    assert run(capsys, "train", "--data", city, "--out", tmp_path / "h", "--feature-set", "hedonic", "--learner", "knn")[0] == 0
    code, _, err = run(capsys, "evaluate", "--data", other, "--model", tmp_path / "h" / "model.json", "--out-of-sample", "--out", tmp_path / "e2")
    assert code == 4 and "OMI-centered" in error_of(err)["message"]


def test_predict_latency_on_10k_adverts(tmp_path, capsys):
    d = tmp_path / "big"
    assert run(capsys, "synth", "--seed", "1", "--n-properties", "1500", "--out", d, "--config", write_synth_cfg(tmp_path))[0] == 0
    assert sum(1 for _ in open(d / "adverts.csv")) == 10_001
    assert run(capsys, "train", "--data", d, "--out", tmp_path / "m", "--feature-set", "omi-comp")[0] == 0
    rec = tmp_path / "rec.json"
    rec.write_text(json.dumps({"surface": 90, "latitude": 45.07, "longitude": 7.69, "appraisal_date": "2016-02-01"}))
    lat = []
    for _ in range(3):
        code, out, _ = run(capsys, "predict", "--data", d, "--model", tmp_path / "m" / "model.json", "--record", rec)
        assert code == 0
        lat.append(json.loads(out)["latency_ms"])
    assert statistics.median(lat) < 100.0


def write_synth_cfg(tmp_path):
    p = tmp_path / "synth.json"
    p.write_text(json.dumps({"synth": {"n_adverts": 10_000}}))
    return p
