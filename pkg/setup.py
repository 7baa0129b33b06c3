#!/usr/bin/env python3
"""
SDAVS - Setup Script
====================

Installs the ``sdavs`` package and its ``sdavs`` console command.

Usage:
    pip install -e .
    sdavs --help
"""

from pathlib import Path

from setuptools import find_packages, setup

HERE = Path(__file__).parent
TEST_ONLY = {'pytest', 'scikit-learn'}


def read_requirements():
    requirements = []
    for line in (HERE / 'requirements.txt').read_text(encoding='utf-8').splitlines():
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        name = line.split('=')[0].split('>')[0].split('<')[0].strip()
        if name not in TEST_ONLY:
            requirements.append(line)
    return requirements


setup(
    name='sdavs',
    version='1.0.0',
    description='Noise-resilient audio-visual segmentation on synthetic scenes, with a numpy autodiff engine',
    long_description=(HERE / 'README.md').read_text(encoding='utf-8'),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests', 'tests.*']),
    python_requires='>=3.10',
    install_requires=read_requirements(),
    extras_require={'test': ['pytest==7.4.2', 'scikit-learn==1.7.2']},
    entry_points={'console_scripts': ['sdavs=sdavs.cli:main']},
)
