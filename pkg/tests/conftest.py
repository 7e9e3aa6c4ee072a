"""Shared fixtures.

Trained artifacts are cached on disk (repo-local directory, overridable via
GANGUARDS_CACHE) so repeated runs of the heavy pipeline tests reuse
deterministic models instead of retraining them.
"""

import os
from pathlib import Path

import pytest
import torch

REPO_ROOT = Path(__file__).resolve().parent.parent
CACHE_DIR = Path(os.environ.get("GANGUARDS_CACHE", REPO_ROOT / ".ganguards-cache"))

os.environ.setdefault("GANGUARDS_CACHE", str(CACHE_DIR))
torch.set_num_threads(max(1, os.cpu_count() or 1))


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module and getattr(module, "RESULTS", None):
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cache():
    from ganguards.harness import ArtifactCache
    return ArtifactCache(CACHE_DIR)


@pytest.fixture(scope="session")
def fid_extractor(cache):
    from ganguards.metrics import train_fid_extractor
    return cache.fid_extractor(
        {"resolution": 32, "channels": 3, "seed": 0},
        lambda: train_fid_extractor(resolution=32, channels=3, seed=0),
    )


@pytest.fixture(scope="session")
def blobs_600():
    from ganguards.data import make_procedural_dataset
    return make_procedural_dataset("blobs", 600, 11)


@pytest.fixture(scope="session")
def micro_gan():
    """A tiny trained generator for plumbing tests (seconds, cached)."""
    from ganguards.data import make_procedural_dataset
    from ganguards.gan import TrainConfig, train_gan

    data = make_procedural_dataset("blobs", 96, 5, size=16)
    config = TrainConfig(steps=8, batch_size=32, snapshot_every=4, seed=3)
    model, checkpoints = train_gan(data, "gan-a", config, role="target", tag="target")
    return {"model": model, "checkpoints": checkpoints, "data": data, "config": config}
