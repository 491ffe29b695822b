from types import SimpleNamespace

import pytest

from burstnet import pipeline
from burstnet.events import build_graph
from burstnet.synth import generate, small_config


@pytest.fixture(scope="session")
def small_run():
    """A 2000-user, two-week synthetic dataset run through detection."""
    res = generate(small_config())
    g = build_graph(res.initial_edges, res.events, t_start=res.t_start, t_end=res.t_end)
    det = pipeline.detect(g)
    return SimpleNamespace(res=res, g=g, det=det, vectors=pipeline.vectors_for(g))


def pytest_terminal_summary(terminalreporter):
    from _report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
