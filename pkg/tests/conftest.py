from __future__ import annotations

import time
from pathlib import Path

import pytest

from ossroles.config import load_config
from ossroles.synth import generate_store

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def synth(tmp_path_factory):
    """The bundled synthetic store (1,000 contributors x 12 quarters), generated once."""
    return generate_store(tmp_path_factory.mktemp("synth") / "store", seed=0)


@pytest.fixture(scope="session")
def synth_config(synth, tmp_path_factory):
    cfg = load_config(ROOT / "configs" / "synthetic.yaml")
    out = tmp_path_factory.mktemp("synth_out") / "out"
    return cfg.model_copy(update={"store": str(synth.store.root), "output": str(out)})


@pytest.fixture(scope="session")
def synth_run(synth_config):
    """One timed ``analyze`` over the synthetic store."""
    from ossroles.pipeline import analyze

    t0 = time.perf_counter()
    result = analyze(synth_config)
    return result, time.perf_counter() - t0
