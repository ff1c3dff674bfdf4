"""Train in one city and value properties in another.

Because OMI-centered features carry no zone identity, a model fitted in
city A can score appraisals from city B once B's zone quotes, PoIs and
adverts are loaded. Zone one-hot (hedonic) models are refused.

    python demos/out_of_sample.py
"""

from avm.comparables import ComparableCorpus
from avm.dataset import SplitSpec, clean
from avm.errors import SchemaMismatchError
from avm.evaluation import evaluate, out_of_sample_eval
from avm.features import FeatureConfig, FeatureContext, build_vectors
from avm.geo import GeoPoint
from avm.pipeline import prepare, train
from avm.poi import PoiStore
from avm.synth import SynthConfig, generate_city_data


def context(city):
    return FeatureContext(city.store, PoiStore(city.pois), ComparableCorpus(city.adverts), FeatureConfig(city.config.city_center))


def main():
    a = generate_city_data(SynthConfig(seed=0, n_properties=4000))
    b = generate_city_data(SynthConfig(seed=2024, n_properties=1000, city_center=GeoPoint(45.4642, 9.19), zone_prefix="B"))
    ca, cb = context(a), context(b)
    records_a, records_b = clean(a.appraisals)[0], clean(b.appraisals)[0]

    prep = prepare(records_a, "omi_centered_comparables", ca, SplitSpec(seed=0))
    model, _ = train(prep, "extra_trees", [{"n_trees": 100, "min_samples_leaf": m} for m in (1, 5)])
    print("city A test:", evaluate(model, prep.test).summary())

    external, skipped = build_vectors(prep.schema, records_b, cb)
    print(f"city B: {len(external)} vectors, {len(skipped)} skipped")
    print("city B:", out_of_sample_eval(model, external).summary())

    hedonic = prepare(records_a, "hedonic", ca, SplitSpec(seed=0))
    h_model, _ = train(hedonic, "extra_trees", [{"n_trees": 40}])
    try:
        out_of_sample_eval(h_model, hedonic.test)
    except SchemaMismatchError as exc:
        print("hedonic model refused:", exc)


if __name__ == "__main__":
    main()
