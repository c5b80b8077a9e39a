import os
import socket
from pathlib import Path

import numpy as np
import pytest

from iotguard.data import FeatureKind
from iotguard.synth import write_synthetic
from iotguard.transforms import FeatureMatrix

GOLDEN = Path(__file__).parent / "golden"

# criterion number -> (status, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


@pytest.fixture(autouse=True)
def _no_network(monkeypatch):
    def refuse(self, address, *args, **kwargs):
        raise RuntimeError(f"network access attempted during tests: {address!r}")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)


@pytest.fixture(autouse=True)
def _clean_llm_env(monkeypatch):
    for var in ("LLM_API_URL", "LLM_API_KEY", "LLM_MODEL"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory) -> Path:
    return write_synthetic(tmp_path_factory.mktemp("kdd") / "synthetic.csv", 4000, seed=3)


@pytest.fixture
def small_matrix() -> FeatureMatrix:
    rng = np.random.default_rng(0)
    return FeatureMatrix(("a", "b", "c", "d", "e"), rng.random((6, 5)))


def kdd_path() -> Path | None:
    """Real KDDCup99 10% file, from $IOTGUARD_KDD_PATH or tests/data/."""
    env = os.environ.get("IOTGUARD_KDD_PATH")
    candidates = [Path(env)] if env else []
    data = Path(__file__).parent / "data"
    candidates += [data / "kddcup.data_10_percent", data / "kddcup.data_10_percent.gz",
                   data / "kddcup.data_10_percent_corrected", data / "kddcup.data_10_percent_corrected.gz"]
    return next((p for p in candidates if p.is_file()), None)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        status, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{status}] criterion {n}: {detail}")


CONT = FeatureKind.CONTINUOUS
CAT = FeatureKind.CATEGORICAL
