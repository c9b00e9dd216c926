from setuptools import setup, find_packages

setup(
    name='uav_mapplan',
    version='0.1.0',
    description='Map-based UAV trajectory planning: channel-learning trajectories, compressed LoS maps and max-min throughput communication trajectories.',
    packages=find_packages(exclude=['examples', 'examples.*']),
    py_modules=['config', 'run'],
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.11',
        'cvxpy>=1.4',
        'clarabel>=0.6',
        'ecos>=2.0.12',
        'networkx>=3.1',
        'pandas>=2.0',
        'scikit-learn>=1.3',
        'pydantic>=2.4',
        'python-dotenv>=1.0',
        'tqdm>=4.66',
    ],
    entry_points={
        'console_scripts': ['uav-mapplan=scenarios.main:main'],
    },
    python_requires='>=3.9',
)
