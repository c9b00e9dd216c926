import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    # 输出目录与日志级别
    OUT_DIR = os.environ.get('UAVMAP_OUT_DIR') or os.path.join(os.path.dirname(os.path.abspath(__file__)), 'results')
    LOG_LEVEL = os.environ.get('UAVMAP_LOG_LEVEL') or 'INFO'

    # 并行进程数 (按随机种子并行)
    WORKERS = int(os.environ.get('UAVMAP_WORKERS') or 1)

    # 城市地图配置 (街道宽度等取声明的默认值)
    CITY_CONFIG = {
        'extent': 600.0,
        'street_pitch': 60.0,
        'street_width': 20.0,
        'building_fill': 1.0,
        'height_range': (5.0, 40.0),
        'mean_height': 14.0
    }

    # 信道参数 (城市微蜂窝场景)
    CHANNEL_CONFIG = {
        'alpha_los': 2.27,
        'alpha_nlos': 3.64,
        'beta_los_db': -30.0,
        'beta_nlos_db': -40.0,
        'sigma2_los': 2.0,
        'sigma2_nlos': 5.0,
        'd_min': 1.0
    }

    # 学习轨迹配置
    LEARNING_CONFIG = {
        'x_b': (0.0, 0.0, 50.0),
        'x_t': (300.0, 300.0, 50.0),
        'T_l': 100.0,
        'a_h': 100.0,
        'a_v': 20.0,
        'h_min': 50.0,
        'h_max': 110.0,
        'v_max': 10.0,
        'epsilon': 1e-6,
        'random_trajectories': 100,
        'mse_trials': 200
    }

    # 地图压缩配置
    COMPRESSION_CONFIG = {
        'samples': 1500,
        'radius': 250.0,
        'l2': 1e-6,
        'tol': 1e-8,
        'max_iter': 100,
        'holdout': 0.2
    }

    # 通信轨迹配置 (N_c 默认等于 T_c, 即 1 秒时隙)
    COMM_CONFIG = {
        'T_c': 90.0,
        'N_c': None,
        'v_max': 10.0,
        'h_min': 50.0,
        'h_max': 100.0,
        'power_dbm': 30.0,
        'noise_dbm': -80.0,
        'loop': True,
        'eps': 1e-3,
        'max_iter': 50,
        'trust_radius': 25.0,
        'trust_altitude': 10.0,
        'max_halvings': 10,
        'exact_epigraph': True
    }

    # 锥优化求解器配置
    SOLVER_CONFIG = {
        'backend': os.environ.get('UAVMAP_SOLVER') or 'CLARABEL',
        'fallback': 'ECOS',
        'tol': 1e-8,
        'kkt_tol': 1e-6,
        'max_iter': 500,
        'infeasibility_tol': 1e-7
    }

    # 场景实验配置
    SCENARIO_CONFIG = {
        'schema_version': 1,
        'seeds': list(range(20)),
        'K': 6,
        'trials': 10000,
        'variants': ['map_based', 'probabilistic', 'deterministic'],
        'parameter_source': 'true'
    }
