import numpy as np
import pytest
import torch

from spidermesh.datamodel import ModelConfig
from spidermesh.io.synth import SynthSpec, synthesize

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return ModelConfig(num_classes=4, aspp_channels=16, input_size=(32, 32))


@pytest.fixture(scope="session")
def synth_samples():
    return synthesize(SynthSpec(num_samples=8, size=(32, 32), impair_prob=0.5, seed=3))


def rand_t(rng, *shape, dtype=torch.float64):
    return torch.from_numpy(rng.normal(size=shape)).to(dtype)
