import numpy as np
import pytest

from poselift import RngStream, SynthConfig, build_dataset, generate_synthetic

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_records():
    """200 records: 50 poses, half of them in mirror pairs, four views each."""
    cfg = SynthConfig(pose_count=50, mirror_fraction=0.5)
    return build_dataset(generate_synthetic(cfg, RngStream(0)), config=cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
