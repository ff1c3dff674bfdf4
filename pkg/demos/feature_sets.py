"""Compare the three feature sets across the tree ensembles.

Prices that are expressed relative to the OMI zone quote, and then enriched
with nearby advert prices, should give lower test errors than raw hedonic
attributes with a zone one-hot.

    python demos/feature_sets.py [seed]
"""

import sys

from avm.comparables import ComparableCorpus
from avm.dataset import SplitSpec, clean
from avm.evaluation import evaluate
from avm.features import FeatureConfig, FeatureContext
from avm.pipeline import prepare, train
from avm.poi import PoiStore
from avm.synth import SynthConfig, generate_city_data

SETS = ("hedonic", "omi_centered", "omi_centered_comparables")
LEARNERS = ("extra_trees", "random_forest", "bagging", "gradient_boosting", "knn")
GRIDS = {
    "knn": [{"k": k} for k in (3, 5, 10)],
    "gradient_boosting": [{"n_trees": 200, "max_depth": d} for d in (3, 5)],
}
TREE_GRID = [{"n_trees": 40, "min_samples_leaf": m} for m in (1, 5)]


def main(seed):
    city = generate_city_data(SynthConfig(seed=seed, n_properties=4000))
    ctx = FeatureContext(city.store, PoiStore(city.pois), ComparableCorpus(city.adverts), FeatureConfig(city.config.city_center))
    kept, _ = clean(city.appraisals)
    print(f"{'test ME (kEUR)':18s}" + "".join(f"{s:>26s}" for s in SETS))
    for learner in LEARNERS:
        cells = []
        for kind in SETS:
            prep = prepare(kept, kind, ctx, SplitSpec(seed=seed))
            model, _ = train(prep, learner, GRIDS.get(learner, TREE_GRID), seed=seed)
            rep = evaluate(model, prep.test)
            cells.append(f"{rep.me_keur:7.2f} (R2 {rep.r2:.3f})")
        print(f"{learner:18s}" + "".join(f"{c:>26s}" for c in cells))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
