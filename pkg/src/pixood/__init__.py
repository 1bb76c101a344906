"""Per-class out-of-distribution detection with condensed class models.

The pieces compose in pipeline order: a jointly trained MLP classifier,
per-class data condensation into etalons, and a calibrated
likelihood-ratio decision strategy in each class's 2D projection space.
"""

__version__ = "0.1.0"
