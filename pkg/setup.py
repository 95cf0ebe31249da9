#!/usr/bin/env python3

from setuptools import setup

setup(
    name="pyreclass",
    python_requires=">= 3.10",
    install_requires=[
        'numpy', 'scipy', 'pandas', 'pyyaml',
    ],
    extras_require={
        'color': ['coloredlogs'],
        'test': ['hypothesis'],
    },
    version="0.1",
    description="Growth of patent classes through new patents and reclassification",
    license="http://www.gnu.org/licenses/gpl-3.0.html",
    packages=[
        "pyreclass",
        "pyreclass.cli",
    ],
    entry_points={
        "console_scripts": [
            "pyreclass=pyreclass.cli.main:main",
        ],
    },
)
