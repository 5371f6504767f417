# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT

import os
import sys
from pathlib import Path

# put src/ first on sys.path so ``import xbar_resilience`` picks up this checkout
ROOT = Path(__file__).resolve().parent
SRC = ROOT / "src"
if SRC.is_dir():
    sys.path.insert(0, str(SRC))
if str(ROOT) not in sys.path:
    sys.path.insert(1, str(ROOT))

os.environ.setdefault("XBAR_NO_PROGRESS", "1")

import pytest

from tests.helpers import write_dataset


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    """Settings are cached per process; tests that change XBAR_* env see fresh values."""
    from xbar_resilience.config import get_settings

    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def data_root(tmp_path, monkeypatch) -> Path:
    """Tiny synthetic MNIST and Fashion-MNIST trees; XBAR_DATA_ROOT points at them."""
    root = tmp_path / "data"
    write_dataset(root, "mnist")
    write_dataset(root, "fashion-mnist", compress=True)
    monkeypatch.setenv("XBAR_DATA_ROOT", str(root))
    return root


@pytest.fixture(scope="session")
def real_data_root() -> Path:
    """Directory with the genuine datasets, or skip."""
    root = Path(os.environ.get("XBAR_DATA_ROOT", "data"))
    if not (root / "mnist").is_dir() or not (root / "fashion-mnist").is_dir():
        pytest.skip("real MNIST / Fashion-MNIST not found under XBAR_DATA_ROOT")
    return root
