from .hellinger import hellinger_split_score
from .forest import HdsrfConfig, HdsrfModel, hdsrf_train, hdsrf_predict
from .rff import RffMap, Standardizer, fit_standardizer, fit_rff, rff_transform
from .bagging import PuBaggingConfig, PuBaggingModel, pubag_train, pubag_score
from .calibration import CalibratedScorer, calibrate

__all__ = [
    "hellinger_split_score",
    "HdsrfConfig",
    "HdsrfModel",
    "hdsrf_train",
    "hdsrf_predict",
    "RffMap",
    "Standardizer",
    "fit_standardizer",
    "fit_rff",
    "rff_transform",
    "PuBaggingConfig",
    "PuBaggingModel",
    "pubag_train",
    "pubag_score",
    "CalibratedScorer",
    "calibrate",
]
