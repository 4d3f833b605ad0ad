"""Bundled example data.

``chick_weights`` is the classic public-domain chick growth experiment
(Crowder and Hand, 1990): body weights in grams of 50 chicks on four
protein diets, measured at birth and every second day through day 20 plus
day 21.  ``pancreas_synthetic`` is a clearly synthetic single-visit growth
dataset (one length measurement per subject at one gestational day),
generated from a smooth increasing-concave mean with an increasing error
SD; it stands in for confidential clinical data with the same structure.
"""

from __future__ import annotations

from importlib import resources

import numpy as np
import pandas as pd

from .dataio import LongFormatTable, load_csv

CHICK_MAPPING = {
    "subject": "chick",
    "time": "time",
    "response": "weight",
    "covariates": ["diet"],
}

PANCREAS_MAPPING = {"subject": "subject", "time": "day", "response": "length"}


def _data_path(name: str):
    return resources.files("shapevar").joinpath("data", name)


def load_chick_weights() -> LongFormatTable:
    """The bundled chick weight table (50 chicks, 578 rows)."""
    with resources.as_file(_data_path("chick_weights.csv")) as path:
        return load_csv(path, CHICK_MAPPING)


def load_pancreas_synthetic() -> LongFormatTable:
    """The bundled synthetic fetal-growth stand-in (44 subjects)."""
    with resources.as_file(_data_path("pancreas_synthetic.csv")) as path:
        return load_csv(path, PANCREAS_MAPPING)


def make_pancreas_synthetic(n: int = 44, seed: int = 20120401) -> pd.DataFrame:
    """Generate the synthetic single-visit growth data.

    Gestational days are uniform on [70, 300]; the mean length follows a
    saturating increasing-concave curve and the error SD grows linearly
    with day.  The bundled CSV is this function's output at the default
    arguments.
    """
    rng = np.random.default_rng(seed)
    day = np.sort(rng.uniform(70.0, 300.0, size=n)).round(0)
    mean = 2.0 + 28.0 * (1.0 - np.exp(-(day - 60.0) / 90.0))
    sd = 0.5 + 0.006 * (day - 70.0)
    length = (mean + rng.standard_normal(n) * sd).round(2)
    return pd.DataFrame(
        {"subject": [f"p{i + 1:02d}" for i in range(n)], "day": day, "length": length}
    )
