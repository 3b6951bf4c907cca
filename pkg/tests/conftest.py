import numpy as np
import pytest

from farpose import synth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_scene():
    return synth.generate_scene(synth.SceneConfig(n_frames=24, seed=7))


@pytest.fixture(scope="session")
def noiseless_scene():
    return synth.generate_scene(synth.SceneConfig(n_frames=24, seed=3).noiseless())


# acceptance outcomes, filled in by test_acceptance.py and printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
