from pathlib import Path

import pytest
import torch

from compresso.corpus import read_corpus, read_pairs

DATA = Path(__file__).parent / "data"

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_corpus():
    return read_corpus(DATA / "toy200.txt")


@pytest.fixture(scope="session")
def toy_pairs():
    pairs, errors = read_pairs(DATA / "pairs100.tsv")
    assert not errors
    return pairs


@pytest.fixture(scope="session")
def data_dir():
    return DATA


ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    def record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE.append((name, ok, detail))
        print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
