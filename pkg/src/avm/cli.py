"""Command line entry point: ``avm synth|train|evaluate|predict|importance``.

Every flag can also come from a JSON file given with ``--config``; keys are
the long flag names with dashes replaced by underscores, and relative paths
in the file are resolved against the file's directory. Flags given on the
command line override the file.

Each command writes its outputs and a ``manifest.json`` (command, resolved
arguments, input file hashes, seeds, library versions) under ``--out``.
Logs go to standard error. On failure a one-line JSON object with
``error`` (configuration, parse or pipeline), ``stage`` and ``message`` is
printed to standard error and the exit code is 2, 3 or 4 respectively.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import AppraisalRecord, SplitSpec, split
from .errors import AvmError, ConfigError
from .evaluation import evaluate, out_of_sample_eval, scatter_export
from .features import FeatureConfig, build_vectors, vectorize
from .geo import GeoPoint
from .learn import LEARNER_KINDS, feature_importance, load_model, predict, predict_array, save_model
from .pipeline import DEFAULT_GRIDS, FEATURE_SET_ALIASES, load_clean, load_context, prepare, schema_of, train
from .synth import CITY_FILES, SynthConfig, generate_city

log = logging.getLogger("avm")

EXIT_CODES = {"configuration": 2, "parse": 3, "pipeline": 4}
DEFAULT_FEATURE_SET = "omi-comp"
DEFAULT_LEARNER = "extra_trees"
PATH_KEYS = ("zones", "pois", "adverts", "appraisals", "model", "grid", "record", "out", "data")


class _Stage:
    name = "setup"


_stage = _Stage()


def stage(name: str) -> None:
    _stage.name = name
    log.info("stage: %s", name)


# argument handling -----------------------------------------------------------


def _add_data_flags(p, appraisals=True):
    p.add_argument("--data", help="directory holding zones.json, pois.csv, adverts.csv, appraisals.csv")
    p.add_argument("--zones")
    p.add_argument("--pois")
    p.add_argument("--adverts")
    if appraisals:
        p.add_argument("--appraisals")


def _add_common(p):
    p.add_argument("--config", help="JSON file supplying any of the flags")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avm", description="Automated valuation model toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic city")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-properties", type=int)
    p.add_argument("--n-zones", type=int)
    p.add_argument("--center-lat", type=float)
    p.add_argument("--center-lon", type=float)
    p.add_argument("--zone-prefix")

    p = sub.add_parser("train", help="clean, split, build features, tune and fit")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--split-seed", type=int, help="defaults to --seed")
    p.add_argument("--feature-set", choices=sorted(FEATURE_SET_ALIASES))
    p.add_argument("--learner", choices=LEARNER_KINDS)
    p.add_argument("--grid", help="JSON list of hyperparameter dicts; 'default' uses the built-in grid")
    p.add_argument("--center-lat", type=float)
    p.add_argument("--center-lon", type=float)
    p.add_argument("--include-omi-values", action="store_true", default=None)

    p = sub.add_parser("evaluate", help="score a model on its test split or an external set")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--model")
    p.add_argument("--out-of-sample", action="store_true", default=None, help="evaluate on every record of --appraisals")
    p.add_argument("--center-lat", type=float, help="city center of an external corpus")
    p.add_argument("--center-lon", type=float)

    p = sub.add_parser("predict", help="value one property")
    _add_common(p)
    _add_data_flags(p, appraisals=False)
    p.add_argument("--model")
    p.add_argument("--record", help="JSON file with one property's attributes")

    p = sub.add_parser("importance", help="rank features of a tree model")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--top", type=int)
    return parser


def resolve_args(args: argparse.Namespace) -> dict:
    """Merge the config file (if any) under the command-line flags."""
    opts = {}
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        try:
            doc = json.loads(cfg_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        for k, v in doc.items():
            k = k.replace("-", "_")
            if k in PATH_KEYS and isinstance(v, str) and v != "default":
                v = str((cfg_path.parent / v).resolve()) if not Path(v).is_absolute() else v
            opts[k] = v
    for k, v in vars(args).items():
        if v is not None and k != "config":
            opts[k] = v
    data = opts.get("data")
    if data:
        for key, fname in CITY_FILES.items():
            if key != "truth":
                opts.setdefault(key, str(Path(data) / fname))
        run_cfg = Path(data) / "config.json"
        if run_cfg.is_file():
            doc = json.loads(run_cfg.read_text(encoding="utf-8"))
            for key in ("center_lat", "center_lon"):
                if key in doc:
                    opts.setdefault(key, doc[key])
    return opts


def _need(opts, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _need_files(opts, *keys):
    _need(opts, *keys)
    for k in keys:
        if not Path(opts[k]).is_file():
            raise ConfigError(f"--{k} file not found: {opts[k]}")


def _out_dir(opts) -> Path:
    _need(opts, "out")
    out = Path(opts["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    out = {"avm": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "numba", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(out: Path, command: str, opts: dict, inputs: dict, seeds: dict, outputs: list) -> None:
    doc = {
        "command": command,
        "options": {k: opts[k] for k in sorted(opts) if k not in ("verbose", "command")},
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in sorted(inputs.items())},
        "seeds": seeds,
        "outputs": sorted(str(o) for o in outputs),
        "versions": _versions(),
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def _center(opts) -> GeoPoint:
    _need(opts, "center_lat", "center_lon")
    try:
        return GeoPoint(float(opts["center_lat"]), float(opts["center_lon"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# commands --------------------------------------------------------------------


def cmd_synth(opts) -> int:
    out = _out_dir(opts)
    stage("synth")
    base = dict(opts.get("synth", {}))
    for key in ("seed", "n_properties", "n_zones", "zone_prefix"):
        if opts.get(key) is not None:
            base[key] = opts[key]
    if opts.get("center_lat") is not None or opts.get("center_lon") is not None:
        base["city_center"] = [_center(opts).latitude, _center(opts).longitude]
    try:
        cfg = SynthConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth configuration: {exc}") from exc
    paths = generate_city(cfg, out)
    run_cfg = {k: CITY_FILES[k] for k in ("zones", "pois", "adverts", "appraisals")}
    run_cfg.update(center_lat=cfg.city_center.latitude, center_lon=cfg.city_center.longitude)
    _dump(out / "config.json", run_cfg)
    write_manifest(out, "synth", opts, {}, {"seed": cfg.seed}, [*paths.values(), out / "config.json"])
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


def _feature_config(opts) -> FeatureConfig:
    return FeatureConfig(_center(opts), include_omi_values=bool(opts.get("include_omi_values")))


def cmd_train(opts) -> int:
    _need_files(opts, "zones", "pois", "adverts", "appraisals")
    out = _out_dir(opts)
    fset = FEATURE_SET_ALIASES.get(opts.get("feature_set", DEFAULT_FEATURE_SET))
    learner = opts.get("learner", DEFAULT_LEARNER)
    if fset is None or learner not in LEARNER_KINDS:
        raise ConfigError(f"unknown feature set or learner: {opts.get('feature_set')!r}, {learner!r}")
    seed = int(opts.get("seed", 0))
    spec = SplitSpec(seed=int(opts.get("split_seed", seed)))
    opts.update(feature_set=opts.get("feature_set", DEFAULT_FEATURE_SET), learner=learner, seed=seed, split_seed=spec.seed)
    grid = opts.get("grid")
    if grid == "default":
        grid = DEFAULT_GRIDS[learner]
    elif isinstance(grid, str):
        try:
            grid = json.loads(Path(grid).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read grid file {grid}: {exc}") from exc
    config = _feature_config(opts)

    stage("ingest")
    records = load_clean(opts["appraisals"])
    ctx = load_context(opts["zones"], opts["pois"], opts["adverts"], config)
    stage("features")
    prep = prepare(records, fset, ctx, spec)
    stage("fit")
    meta = {
        "feature_config": config.to_dict(),
        "split": {"train": spec.train_fraction, "validation": spec.validation_fraction, "test": spec.test_fraction, "seed": spec.seed},
        "n_skipped": len(prep.skipped),
    }
    model, table = train(prep, learner, grid, seed, meta)
    save_model(model, out / "model.json")
    _dump(out / "tuning.json", [{"params": row[0], "validation_me_keur": row[1]} for row in table])
    val = evaluate(model, prep.validation) if prep.validation else None
    inputs = {k: opts[k] for k in ("zones", "pois", "adverts", "appraisals")}
    write_manifest(out, "train", opts, inputs, {"seed": seed, "split_seed": spec.seed}, [out / "model.json", out / "tuning.json"])
    if val is not None:
        print(f"validation ME {val.me_keur:.3f} kEUR (R2 {val.r2:.3f}, n={val.n})")
    return 0


def _model_context(opts, model, center_override=False):
    meta = model.train_metadata.get("feature_config")
    if meta is None:
        raise ConfigError("model has no stored feature configuration")
    if center_override and opts.get("center_lat") is not None:
        meta = {**meta, "city_center": [opts["center_lat"], opts["center_lon"]]}
    return load_context(opts["zones"], opts["pois"], opts["adverts"], FeatureConfig.from_dict(meta))


def cmd_evaluate(opts) -> int:
    _need_files(opts, "model", "zones", "pois", "adverts", "appraisals")
    out = _out_dir(opts)
    stage("load")
    model = load_model(opts["model"])
    schema = schema_of(model)
    ctx = _model_context(opts, model, center_override=True)
    records = load_clean(opts["appraisals"])
    stage("evaluate")
    if opts.get("out_of_sample"):
        vectors, skipped = build_vectors(schema, records, ctx)
        report = out_of_sample_eval(model, vectors)
    else:
        sp = model.train_metadata["split"]
        spec = SplitSpec(sp["train"], sp["validation"], sp["test"], sp["seed"])
        _, _, test_r = split(records, spec)
        vectors, skipped = build_vectors(schema, test_r, ctx)
        report = evaluate(model, vectors)
    report.save(out / "report.json")
    files = scatter_export(report, out / "scatter")
    inputs = {k: opts[k] for k in ("model", "zones", "pois", "adverts", "appraisals")}
    write_manifest(out, "evaluate", opts, inputs, {}, [out / "report.json", *files])
    print(report.summary())
    return 0


def _read_record(path) -> AppraisalRecord:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read record {path}: {exc}") from exc
    from .dataset import _row_to_record

    defaults = {
        "id": "query",
        "valuation": "1",
        "construction_year": "1970",
        "bathrooms": "1",
        "floor": "0",
        "elevator": "false",
        "maintenance": "medium",
        "installations_quality": "medium",
        "finishing_quality": "medium",
        "view": "medium",
        "energy_class": "",
        "registered_use": "residential",
        "orientation": "",
        "address": "",
        "city_area": "Suburbs",
        "appraisal_date": dt.date.today().isoformat(),
    }
    row = {**defaults, **{k: str(v).lower() if isinstance(v, bool) else str(v) for k, v in d.items()}}
    try:
        return _row_to_record(row)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad record {path}: {exc}") from exc


def cmd_predict(opts) -> int:
    _need_files(opts, "model", "zones", "pois", "adverts", "record")
    stage("load")
    model = load_model(opts["model"])
    schema = schema_of(model)
    ctx = _model_context(opts, model)
    record = _read_record(opts["record"])
    # the first call loads the compiled tree kernels; keep that out of the timing
    predict_array(model, np.zeros(len(model.feature_names)))
    stage("predict")
    t0 = time.perf_counter()
    x = vectorize(schema, record, ctx, with_target=False)
    value = predict(model, x) * x.target_scale
    elapsed = time.perf_counter() - t0
    result = {"id": record.id, "valuation": round(value, 2), "latency_ms": round(1000 * elapsed, 3)}
    if opts.get("out"):
        out = _out_dir(opts)
        _dump(out / "prediction.json", {k: v for k, v in result.items() if k != "latency_ms"})
        inputs = {k: opts[k] for k in ("model", "zones", "pois", "adverts", "record")}
        write_manifest(out, "predict", opts, inputs, {}, [out / "prediction.json"])
    print(json.dumps(result))
    return 0


def cmd_importance(opts) -> int:
    _need_files(opts, "model")
    model = load_model(opts["model"])
    stage("importance")
    ranked = feature_importance(model, top=int(opts.get("top", 9)))
    for name, value in ranked:
        print(f"{value:8.3f}  {name}")
    if opts.get("out"):
        out = _out_dir(opts)
        _dump(out / "importance.json", [{"feature": n, "importance": v} for n, v in ranked])
        write_manifest(out, "importance", opts, {"model": opts["model"]}, {}, [out / "importance.json"])
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "importance": cmd_importance,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    _stage.name = "setup"
    try:
        opts = resolve_args(args)
        return COMMANDS[args.command](opts)
    except AvmError as exc:
        category, message = exc.category, str(exc)
    except (OSError, KeyError, ValueError) as exc:
        category, message = "pipeline", f"{type(exc).__name__}: {exc}"
    print(json.dumps({"error": category, "stage": _stage.name, "message": message}), file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
