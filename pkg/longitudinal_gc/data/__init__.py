from longitudinal_gc.data.dataset import (
    Individual,
    LongitudinalDataset,
    Standardizer,
    apply_standardizer,
    fit_standardizer,
    invert_standardizer,
    load_csv,
    save_csv,
    standardize,
)

__all__ = [
    "Individual",
    "LongitudinalDataset",
    "Standardizer",
    "apply_standardizer",
    "fit_standardizer",
    "invert_standardizer",
    "load_csv",
    "save_csv",
    "standardize",
]
