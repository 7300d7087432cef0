from pathlib import Path

import numpy as np
import pytest

from oneshot_retouch.experiment import list_images, load_luma

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def train_plane():
    return load_luma(DATA / "train" / "astronaut.png")


@pytest.fixture(scope="session")
def corpus_planes():
    return {p.stem: load_luma(p) for p in list_images(DATA / "corpus")}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, filled in by test_acceptance.py and printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
