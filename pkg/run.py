#!/usr/bin/env python3
"""
无人机轨迹规划工具启动脚本
"""

import os
import sys


def check_dependencies():
    """检查依赖是否已安装"""
    required_packages = [
        'numpy',
        'scipy',
        'cvxpy',
        'clarabel',
        'networkx',
        'pandas',
        'sklearn',
        'pydantic',
        'dotenv',
        'tqdm'
    ]

    missing_packages = []

    for package in required_packages:
        try:
            __import__(package)
        except ImportError:
            missing_packages.append(package)

    if missing_packages:
        print("❌ 缺少以下依赖包:")
        for package in missing_packages:
            print(f"   - {package}")

        print("\n请运行以下命令安装依赖:")
        print("pip install -r requirements.txt")
        return False

    return True


def setup_environment():
    """准备输出目录"""
    from config import Config

    if not os.path.exists('.env'):
        print("ℹ️ 未找到 .env 文件, 使用默认配置 (可通过 UAVMAP_* 环境变量覆盖)")
    os.makedirs(Config.OUT_DIR, exist_ok=True)


def main():
    """主函数"""
    if not check_dependencies():
        sys.exit(1)

    setup_environment()

    from scenarios.main import main as scenario_main
    try:
        sys.exit(scenario_main(sys.argv[1:]))
    except KeyboardInterrupt:
        print("\n👋 已停止")
        sys.exit(130)


if __name__ == '__main__':
    main()
