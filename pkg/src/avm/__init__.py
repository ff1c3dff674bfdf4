"""Automated valuation of residential properties.

The package covers the whole chain from raw inputs to a valuation: OMI zone
lookup (:mod:`avm.omi`), points of interest (:mod:`avm.poi`), comparable
adverts (:mod:`avm.comparables`), appraisal cleaning and splitting
(:mod:`avm.dataset`), the three feature sets (:mod:`avm.features`),
learners (:mod:`avm.learn`), metrics (:mod:`avm.evaluation`) and a
synthetic city generator (:mod:`avm.synth`).
"""

__version__ = "0.1.0"
