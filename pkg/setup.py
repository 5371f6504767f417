# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT

from setuptools import find_packages, setup

setup(
    name="xbar-resilience",
    version="0.1.0",
    description="Crossbar noise-resilience and energy experiments",
    author="xbar-resilience contributors",
    license="MIT",
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    package_data={"xbar_resilience": ["profiles/*.json"]},
    python_requires=">=3.10",
    install_requires=[
        "numpy",
        "scipy",
        "click",
        "prometheus-client",
        "PyYAML",
        "tqdm",
        "filelock",
        "tomli; python_version < '3.11'",
    ],
    entry_points={
        "console_scripts": [
            "xbar=xbar_resilience.cli:main",
        ],
    },
)
