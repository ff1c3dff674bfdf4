"""Test-set metrics, scatter exports and out-of-sample evaluation.

The headline metric ``ME`` is the root mean squared error, reported in
thousands of euros; ``MSE`` is its square and ``R2`` the coefficient of
determination against the test-set mean.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyTestSetError, SchemaMismatchError
from .learn import TrainedModel, predict_many

__all__ = ["EvalReport", "metrics", "evaluate", "out_of_sample_eval", "scatter_export", "read_scatter"]


@dataclass
class EvalReport:
    me_keur: float
    mse_keur2: float
    r2: float
    n: int
    per_record: list = field(default_factory=list)
    out_of_sample: bool = False

    def to_dict(self) -> dict:
        return {
            "me_keur": self.me_keur,
            "mse_keur2": self.mse_keur2,
            "r2": self.r2,
            "n": self.n,
            "out_of_sample": self.out_of_sample,
            "per_record": [
                {"id": i, "true_value": t, "predicted": p, "error": e} for i, t, p, e in self.per_record
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def summary(self) -> str:
        tag = " (out of sample)" if self.out_of_sample else ""
        return f"n={self.n} ME={self.me_keur:.2f} kEUR MSE={self.mse_keur2:.0f} R2={self.r2:.3f}{tag}"


def metrics(y_true, y_pred) -> tuple[float, float, float]:
    """``(me_keur, mse_keur2, r2)`` for values in euros."""
    y = np.asarray(y_true, dtype=float)
    yhat = np.asarray(y_pred, dtype=float)
    if y.size == 0:
        raise EmptyTestSetError("empty test set")
    sse = float(np.sum((y - yhat) ** 2))
    me_keur = math.sqrt(sse / y.size) / 1000.0
    mse_keur2 = me_keur * me_keur
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst > 0:
        r2 = 1.0 - sse / sst
    else:
        r2 = 1.0 if sse == 0 else -math.inf
    return me_keur, mse_keur2, r2


def evaluate(model: TrainedModel, test: Sequence) -> EvalReport:
    """Score ``model`` on feature vectors carrying targets.

    ``error`` in ``per_record`` is ``predicted - true`` in euros.
    """
    if not len(test):
        raise EmptyTestSetError("empty test set")
    if any(v.target is None for v in test):
        raise ValueError("every test vector needs a target")
    pred = predict_many(model, test)
    scale = np.array([v.target_scale for v in test], dtype=float)
    y = np.array([v.target for v in test], dtype=float) * scale
    yhat = pred * scale
    me, mse, r2 = metrics(y, yhat)
    rows = [(v.record_id, float(t), float(p), float(p - t)) for v, t, p in zip(test, y, yhat)]
    return EvalReport(me, mse, r2, len(test), rows)


def out_of_sample_eval(model: TrainedModel, external: Sequence) -> EvalReport:
    """Evaluate on properties from other cities or periods.

    Only OMI-centered models are accepted: zone-name one-hots carry no meaning
    outside the training city.
    """
    if model.feature_set not in ("omi_centered", "omi_centered_comparables") or any(
        n.startswith("omi_zone=") for n in model.feature_names
    ):
        raise SchemaMismatchError(f"out-of-sample evaluation needs an OMI-centered model, got {model.feature_set}")
    report = evaluate(model, external)
    report.out_of_sample = True
    return report


def scatter_export(report: EvalReport, path) -> tuple[Path, Path]:
    """Write ``<stem>_errors.csv`` (id, true_value, prediction_error) and
    ``<stem>_predicted.csv`` (id, true_value, predicted) next to ``path``."""
    path = Path(path)
    stem = path.with_suffix("")
    err_path = stem.with_name(stem.name + "_errors.csv")
    pred_path = stem.with_name(stem.name + "_predicted.csv")
    with err_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "true_value", "prediction_error"])
        for i, t, _, e in report.per_record:
            w.writerow([i, repr(t), repr(e)])
    with pred_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "true_value", "predicted"])
        for i, t, p, _ in report.per_record:
            w.writerow([i, repr(t), repr(p)])
    return err_path, pred_path


def read_scatter(err_path, pred_path) -> list[tuple[str, float, float, float]]:
    """Inverse of :func:`scatter_export`; returns per-record tuples."""
    with open(err_path, newline="", encoding="utf-8") as fh:
        errs = list(csv.DictReader(fh))
    with open(pred_path, newline="", encoding="utf-8") as fh:
        preds = list(csv.DictReader(fh))
    return [
        (e["id"], float(e["true_value"]), float(p["predicted"]), float(e["prediction_error"]))
        for e, p in zip(errs, preds)
    ]
