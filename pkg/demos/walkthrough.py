"""Walk through one valuation pipeline on a synthetic city.

Generates a city, cleans the appraisals, builds the OMI-centered features
with comparables, tunes an extra-trees ensemble on the validation split and
reports test metrics, the most important features and one single valuation.

    python demos/walkthrough.py [out_dir]
"""

import sys
import tempfile
from pathlib import Path

from avm.comparables import ComparableCorpus
from avm.dataset import SplitSpec, clean
from avm.evaluation import evaluate, scatter_export
from avm.features import FeatureConfig, FeatureContext, vectorize
from avm.learn import feature_importance, predict
from avm.pipeline import DEFAULT_GRIDS, prepare, train
from avm.poi import PoiStore
from avm.synth import SynthConfig, generate_city_data, write_city


def main(out_dir):
    out = Path(out_dir)
    city = generate_city_data(SynthConfig(seed=7, n_properties=2000))
    write_city(city, out / "city")
    print(f"city: {len(city.zones)} zones, {len(city.pois)} PoIs, {len(city.adverts)} adverts, {len(city.appraisals)} appraisals")

    kept, dropped = clean(city.appraisals)
    print(f"cleaning kept {len(kept)} and dropped {len(dropped)}")

    ctx = FeatureContext(city.store, PoiStore(city.pois), ComparableCorpus(city.adverts), FeatureConfig(city.config.city_center))
    prep = prepare(kept, "omi_centered_comparables", ctx, SplitSpec(seed=7))
    print(f"split {len(prep.train)}/{len(prep.validation)}/{len(prep.test)}, {len(prep.train[0].values)} features")

    model, table = train(prep, "extra_trees", DEFAULT_GRIDS["extra_trees"], seed=7)
    for params, me in table:
        print(f"  validation ME {me:6.2f} kEUR for {params}")

    report = evaluate(model, prep.test)
    print("test:", report.summary())
    scatter_export(report, out / "scatter")

    print("top features:")
    for name, value in feature_importance(model, top=5):
        print(f"  {value:6.2f}  {name}")

    record = prep.test[0].record_id
    source = next(r for r in kept if r.id == record)
    x = vectorize(prep.schema, source, ctx, with_target=False)
    print(f"{record}: appraised {source.valuation:,.0f} EUR, predicted {predict(model, x) * x.target_scale:,.0f} EUR")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="avm-demo-"))
