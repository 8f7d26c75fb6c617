import time

import numpy as np
import pytest

from tacempc.config import load_config
from tacempc.history import HistoryState
from tacempc.validation import reference_trace


@pytest.fixture(scope="session")
def builtin():
    cfg = load_config(model_name="mueller-koehler")
    return cfg.model, cfg.cert, cfg.ss


@pytest.fixture(scope="session")
def fig_history():
    """Mixed initial history used by the bundled closed-loop experiment."""
    return HistoryState(np.array([[-2.0, -2.0, -2.0, -2.0, -1.0]]), T=6)


@pytest.fixture(scope="session")
def _reference_run():
    start = time.perf_counter()
    trace = reference_trace()
    return trace, time.perf_counter() - start


@pytest.fixture(scope="session")
def closed_loop_trace(_reference_run):
    """The 30-step reference run; shared because it is the expensive part."""
    return _reference_run[0]


@pytest.fixture(scope="session")
def closed_loop_runtime(_reference_run):
    return _reference_run[1]
