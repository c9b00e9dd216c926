# 空地信道模型与参数估计模块

from .model import (
    D_MIN, ChannelParams, Measurement, gain_db, phi_db, link_geometry,
    sample_slot_measurements, measurements_to_frame, export_measurements
)
from .estimation import (
    SEGMENTS, ErrorTrace, SegmentGram, GramAccumulator, SegmentEstimate, ParamEstimate,
    Improvement, PooledFit, design_rows, inversion_lemma_update,
    accumulate, mle_estimate, improvement_r, fit_pooled
)

__all__ = [
    'D_MIN', 'ChannelParams', 'Measurement', 'gain_db', 'phi_db', 'link_geometry',
    'sample_slot_measurements', 'measurements_to_frame', 'export_measurements',
    'SEGMENTS', 'ErrorTrace', 'SegmentGram', 'GramAccumulator', 'SegmentEstimate', 'ParamEstimate',
    'Improvement', 'PooledFit', 'design_rows', 'inversion_lemma_update',
    'accumulate', 'mle_estimate', 'improvement_r', 'fit_pooled'
]
