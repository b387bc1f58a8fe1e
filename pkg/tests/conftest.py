import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
TOY_DATA = REPO_ROOT / "data" / "toy"
FULL_DATA = REPO_ROOT / "data" / "abstract_scenes"

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture(scope="session")
def toy_data_dir() -> Path:
    if not TOY_DATA.is_dir():
        pytest.skip("bundled toy dataset missing (run scripts/make_toy_dataset.py)")
    return TOY_DATA


def full_dataset_available() -> bool:
    return (FULL_DATA / "features.tsv").is_file()
