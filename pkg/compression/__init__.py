# 地图压缩模块: 节点级仰角视距概率模型

from .sampling import TrainingSample, elevation_angle, sample_training_set, samples_to_arrays
from .los_model import (
    FitDiagnostics, LogisticFit, LocalLosModel,
    penalized_log_likelihood, fit_logistic, fit_logistic_arrays
)
from .compressed_map import (
    GLOBAL_MODEL_ID, CompressedMap, shadow_mean_factor, los_probability, expected_gain,
    fit_global_model, compress_map, los_curves_frame, save_compressed_map, load_compressed_map
)

__all__ = [
    'TrainingSample', 'elevation_angle', 'sample_training_set', 'samples_to_arrays',
    'FitDiagnostics', 'LogisticFit', 'LocalLosModel',
    'penalized_log_likelihood', 'fit_logistic', 'fit_logistic_arrays',
    'GLOBAL_MODEL_ID', 'CompressedMap', 'shadow_mean_factor', 'los_probability', 'expected_gain',
    'fit_global_model', 'compress_map', 'los_curves_frame', 'save_compressed_map', 'load_compressed_map'
]
