import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fluotomo import fem, harness


@pytest.fixture(scope="session")
def mesh32():
    return fem.build_structured_mesh(0.5, 32, 2)


@pytest.fixture(scope="session")
def mesh64():
    return fem.build_structured_mesh(0.5, 64, 2)


@pytest.fixture(scope="session")
def case11_small():
    """Case (1.1) preset synthesized at n=64: (config, mesh, state, data)."""
    cfg = harness.preset_config("case11", n=64, k=2, noise_levels=[])
    mesh, state, data = harness.synthesize(cfg)
    return cfg, mesh, state, data


@pytest.fixture(scope="session")
def case12_small():
    cfg = harness.preset_config("case12", n=64, k=2, noise_levels=[])
    mesh, state, data = harness.synthesize(cfg)
    return cfg, mesh, state, data


@pytest.fixture(scope="session")
def case2_small():
    cfg = harness.preset_config("case2", n=64, k=2, noise_levels=[])
    mesh, state, data = harness.synthesize(cfg)
    return cfg, mesh, state, data
