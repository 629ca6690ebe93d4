from __future__ import annotations

import numpy as np
import pytest

from taathp.config import ModelConfig
from taathp.eventio import EventSequence


def central_difference(f, arrays: dict[str, np.ndarray], step: float = 1e-5) -> dict[str, np.ndarray]:
    """Numerical gradient of scalar ``f()`` w.r.t. each array, perturbing in place."""
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f()
            flat[i] = orig - step
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        out[name] = g
    return out


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


@pytest.fixture
def toy_seq() -> EventSequence:
    return EventSequence(np.array([0.5, 1.3, 2.1]), np.array([0, 1, 0]))


@pytest.fixture
def tiny_cfg() -> ModelConfig:
    return ModelConfig(num_types=2, d_model=8, d_hidden=16, d_k=8, n_heads=2, n_layers=1,
                       d_rnn=0, dropout=0.0)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, whatever the verbosity."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in nodeid and rep.when == "call":
                name = nodeid.split("::")[-1][len("test_criterion_"):]
                lines.append((int(name.split("_")[0]), name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for num, name, verdict in sorted(lines):
            terminalreporter.write_line(f"criterion {num} [{verdict}] {name}")
