import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from genretrain.genai import GenConfig  # noqa: E402
from genretrain.harness import HarnessConfig, train_models  # noqa: E402
from genretrain.stream import build_scenario, training_preset  # noqa: E402

TRAINING_SEED = 1000


def trained(scenario, config=None):
    samples = build_scenario(training_preset(scenario, TRAINING_SEED))[0]
    return train_models(samples, config or HarnessConfig())


@pytest.fixture(scope="session")
def qos_models():
    return trained("qos")


@pytest.fixture(scope="session")
def ns_models():
    return trained("ns-slow-close")


@pytest.fixture(scope="session")
def tiny_config():
    """Short training budget for tests that exercise plumbing, not quality."""
    gen = GenConfig(epochs=4, min_gan_epochs=2, select_after=1, latent_dim=4, vae_hidden=8,
                    gen_hidden=4, gen_dense=8, disc_hidden=8, calibration_draws=2)
    return HarnessConfig(gen=gen, forecaster={"hidden": 8, "layers": 1, "epochs": 1},
                         refit_epochs=2, refresh_samples=())


@pytest.fixture(scope="session")
def tiny_models(tiny_config):
    rng = np.random.default_rng(5)
    samples = 20.0 + rng.normal(size=900)
    return train_models(samples, tiny_config)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[num])
