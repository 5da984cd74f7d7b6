from pathlib import Path

import numpy as np
import pytest

from ksc.dsp import Waveform, read_wav

DATA = Path(__file__).parent / "data"
ARCTIC = DATA / "arctic_a0007.wav"  # CMU ARCTIC utterance, see data/COPYING.arctic


@pytest.fixture(scope="session")
def arctic() -> Waveform:
    return read_wav(ARCTIC)


def arctic_clips(n: int = 10) -> list[Waveform]:
    """``n`` consecutive, non-overlapping segments of the ARCTIC recording."""
    w = read_wav(ARCTIC)
    L = len(w.samples) // n
    return [Waveform(w.samples[i * L : (i + 1) * L].copy(), w.sample_rate) for i in range(n)]


@pytest.fixture(scope="session")
def clips():
    return arctic_clips(10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one "criterion N: PASS/FAIL ..." line per acceptance check, echoed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
