"""
DICA Intersection Simulator - Setup Script
"""
from setuptools import setup, find_packages

setup(
    name="dica-sim",
    version="0.1.0",
    description="Discrete-time simulator for coordinated autonomous intersection crossing",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "click>=8.0",
        "tabulate>=0.9",
        "numpy>=1.22",
        "PyYAML>=6.0",
    ],
    extras_require={
        "test": [
            "pytest>=7.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "dica=dica_sim.cli:cli",
        ],
    },
    python_requires=">=3.8",
)
