"""End-to-end helpers shared by the command line and the demos."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .comparables import load_corpus
from .dataset import SplitSpec, clean, load_appraisals, split
from .features import FeatureConfig, FeatureContext, FeatureSchema, build_schema, build_vectors
from .learn import TrainedModel, fit, tune_and_fit
from .omi import load_zones
from .poi import load_pois

log = logging.getLogger(__name__)

FEATURE_SET_ALIASES = {
    "hedonic": "hedonic",
    "omi": "omi_centered",
    "omi-comp": "omi_centered_comparables",
    "omi_centered": "omi_centered",
    "omi_centered_comparables": "omi_centered_comparables",
}

DEFAULT_GRIDS = {
    "knn": [{"k": k} for k in (1, 3, 5, 10, 20)],
    "bagging": [{"n_trees": 100, "min_samples_leaf": m} for m in (1, 5)],
    "random_forest": [{"n_trees": 100, "min_samples_leaf": m, "max_features_fraction": f} for m in (1, 5) for f in (1 / 3, 2 / 3)],
    "extra_trees": [{"n_trees": 100, "min_samples_leaf": m, "max_features_fraction": f} for m in (1, 5) for f in (1 / 3, 2 / 3)],
    "gradient_boosting": [{"n_trees": 300, "max_depth": d, "learning_rate": 0.1} for d in (3, 5)],
    "adaboost_r2": [{"n_estimators": 50, "max_depth": d, "loss_kind": "linear"} for d in (3, 6)],
    "linear_baseline": [{}],
}


@dataclass
class Prepared:
    schema: FeatureSchema
    train: list
    validation: list
    test: list
    skipped: list = field(default_factory=list)


def load_context(zones_path, pois_path, adverts_path, config: FeatureConfig) -> FeatureContext:
    return FeatureContext(load_zones(zones_path), load_pois(pois_path), load_corpus(adverts_path), config)


def load_clean(appraisals_path) -> list:
    kept, dropped = clean(load_appraisals(appraisals_path))
    log.info("cleaning kept %d, dropped %d", len(kept), len(dropped))
    return kept


def prepare(records: Sequence, feature_set: str, ctx: FeatureContext, spec: SplitSpec = SplitSpec()) -> Prepared:
    """Split records, fit the schema on the training part and vectorize all parts."""
    train_r, val_r, test_r = split(records, spec)
    schema = build_schema(feature_set, train_r, ctx)
    parts, skipped = [], []
    for part in (train_r, val_r, test_r):
        vecs, skip = build_vectors(schema, part, ctx)
        parts.append(vecs)
        skipped.extend(skip)
    if skipped:
        log.warning("%d records lack %s features and were excluded", len(skipped), feature_set)
    return Prepared(schema, *parts, skipped)


def train(prep: Prepared, learner: str, grid=None, seed: int = 0, metadata=None):
    """Tune on the validation part (when a grid is given) and refit.

    Returns ``(model, tuning_table)``; the table is empty without a grid.
    """
    if not grid:
        return fit(learner, {"seed": seed}, prep.train, train_metadata=metadata), []
    grid = [{"seed": seed, **g} for g in grid]
    model, _, table = tune_and_fit(learner, grid, prep.train, prep.validation)
    model.train_metadata.update(metadata or {})
    return model, table


def schema_of(model: TrainedModel) -> FeatureSchema:
    if model.schema is None:
        raise ValueError("model file carries no feature schema")
    return FeatureSchema.from_dict(model.schema)
