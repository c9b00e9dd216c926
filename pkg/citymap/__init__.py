# 城市地图与视距几何模块

from .geometry import (
    Segment, Building, GroundNode, CityMap,
    generate_city, place_nodes, los_check, los_batch,
    rayleigh_scale_for_mean, save_city, load_city
)
from .path_graph import ActionTuple, PathGraph, build_action_alphabet, build_path_graph, rho_alphabet

__all__ = [
    'Segment', 'Building', 'GroundNode', 'CityMap',
    'generate_city', 'place_nodes', 'los_check', 'los_batch',
    'rayleigh_scale_for_mean', 'save_city', 'load_city',
    'ActionTuple', 'PathGraph', 'build_action_alphabet', 'build_path_graph', 'rho_alphabet'
]
